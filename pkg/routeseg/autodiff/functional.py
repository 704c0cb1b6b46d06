import numpy as np

from routeseg.autodiff.kernels import (
    bilinear_matrix,
    col2im,
    conv2d_direct,
    conv_output_size,
    im2col,
)
from routeseg.autodiff.tensor import Function, Tensor, as_tensor

CONV_METHODS = ("im2col", "direct")


class Conv2d(Function):
    """
    Cross-correlation with zero padding, for ``groups == 1`` (dense) or
    ``groups == C`` with one filter per channel (depthwise).
    """

    def forward(self, x, w, stride=1, padding=0, groups=1, method="im2col"):
        self.x, self.w = x, w
        self.stride, self.padding, self.groups = stride, padding, groups
        kh, kw = w.shape[2:]
        if method == "direct":
            return conv2d_direct(x, w, stride, padding, groups)
        cols = im2col(x, kh, kw, stride, padding)
        if groups == 1:
            out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))
            return out.transpose(0, 3, 1, 2)
        return np.einsum("bchwij,cij->bchw", cols, w[:, 0])

    def backward(self, grad):
        kh, kw = self.w.shape[2:]
        cols = im2col(self.x, kh, kw, self.stride, self.padding)
        if self.groups == 1:
            dw = np.tensordot(grad, cols, axes=([0, 2, 3], [0, 2, 3]))
            dcols = np.tensordot(grad, self.w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        else:
            dw = np.einsum("bchw,bchwij->cij", grad, cols)[:, None]
            dcols = np.einsum("bchw,cij->bchwij", grad, self.w[:, 0])
        dx = col2im(dcols, self.x.shape, self.stride, self.padding)
        return dx, dw


class Upsample(Function):
    """Separable bilinear resampling by an integer factor."""

    def forward(self, x, factor=2):
        H, W = x.shape[-2:]
        self.Ah = bilinear_matrix(H, factor)
        self.Aw = bilinear_matrix(W, factor)
        return self.Ah @ x @ self.Aw.T

    def backward(self, grad):
        return (self.Ah.T @ (grad @ self.Aw),)


class GlobalAvgPool(Function):
    def forward(self, x):
        self.in_shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        B, C, H, W = self.in_shape
        return (np.broadcast_to(grad[:, :, None, None] / (H * W), self.in_shape).copy(),)


class Linear(Function):
    def forward(self, x, weight, bias):
        self.x, self.weight = x, weight
        return x @ weight.T + bias

    def backward(self, grad):
        return grad @ self.weight, grad.T @ self.x, grad.sum(axis=0)


def conv2d(input, kernel, stride=1, padding=0, bias=None, groups=1, method="im2col") -> Tensor:
    """
    2-D cross-correlation.

    Parameters
    ----------
    input : Tensor
        shape (B, Cin, H, W)
    kernel : Tensor
        shape (Cout, Cin // groups, kh, kw), kh and kw odd
    stride : int, default: 1
    padding : int, default: 0
    bias : Tensor, optional
        shape (Cout,)
    groups : int, default: 1
        1 for a dense convolution, Cin for a depthwise one.
    method : {"im2col", "direct"}
        "im2col" uses a strided patch view and tensordot, "direct" the
        numba scalar-loop kernel. Both give the same values; gradients are
        always computed on the patch view.

    Returns
    -------
    Tensor of shape (B, Cout, H', W') with
    H' = floor((H + 2 * padding - kh) / stride) + 1.
    """
    input, kernel = as_tensor(input), as_tensor(kernel)
    if input.ndim != 4 or kernel.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-D input and kernel, got input {input.shape} and kernel {kernel.shape}"
        )
    B, C, H, W = input.shape
    cout, cin_g, kh, kw = kernel.shape
    if cin_g * groups != C:
        raise ValueError(
            f"conv2d channel mismatch: input {input.shape} has {C} channels but kernel "
            f"{kernel.shape} expects {cin_g * groups} (groups={groups})"
        )
    if groups != 1 and not (groups == C and cout == C):
        raise ValueError(
            f"conv2d supports groups=1 or depthwise groups=C with C filters, got groups={groups} "
            f"for input {input.shape} and kernel {kernel.shape}"
        )
    if kh % 2 != 1 or kw % 2 != 1:
        raise ValueError(f"conv2d kernel extents must be odd, got kernel {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    if method not in CONV_METHODS:
        raise ValueError(f"unknown conv2d method {method!r}, expected one of {CONV_METHODS}")
    if conv_output_size(H, kh, stride, padding) < 1 or conv_output_size(W, kw, stride, padding) < 1:
        raise ValueError(
            f"conv2d kernel {kernel.shape} does not fit input {input.shape} with padding {padding}"
        )
    out = Conv2d.apply(
        input, kernel, stride=int(stride), padding=int(padding), groups=int(groups), method=method
    )
    if bias is not None:
        out = out + as_tensor(bias).reshape(1, cout, 1, 1)
    return out


def separable_conv3x3(input, depthwise, pointwise, stride=1, method="im2col") -> Tensor:
    """
    Depthwise 3x3 convolution (padding 1, given stride) followed by a
    pointwise 1x1 convolution.

    Parameters
    ----------
    input : Tensor
        shape (B, C, H, W)
    depthwise : Tensor
        shape (C, 1, 3, 3)
    pointwise : Tensor
        shape (Cout, C, 1, 1)
    stride : int
        stride of the depthwise stage.
    """
    input, depthwise, pointwise = as_tensor(input), as_tensor(depthwise), as_tensor(pointwise)
    C = input.shape[1]
    if depthwise.shape != (C, 1, 3, 3):
        raise ValueError(
            f"separable_conv3x3: depthwise kernel {depthwise.shape} does not match input "
            f"{input.shape}, expected {(C, 1, 3, 3)}"
        )
    if pointwise.ndim != 4 or pointwise.shape[1:] != (C, 1, 1):
        raise ValueError(
            f"separable_conv3x3: pointwise kernel {pointwise.shape} does not match input "
            f"{input.shape}, expected (Cout, {C}, 1, 1)"
        )
    hidden = conv2d(input, depthwise, stride=stride, padding=1, groups=C, method=method)
    return conv2d(hidden, pointwise, stride=1, padding=0, method=method)


def bilinear_upsample(input, factor: int) -> Tensor:
    """Bilinear upsampling by an integer factor, half-pixel centers (align_corners=False)."""
    input = as_tensor(input)
    if input.ndim != 4 or min(input.shape[2:]) < 1:
        raise ValueError(f"bilinear_upsample expects a non-empty 4-D input, got {input.shape}")
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsampling factor must be a positive integer, got {factor}")
    return Upsample.apply(input, factor=int(factor))


def bilinear_upsample2x(input) -> Tensor:
    return bilinear_upsample(input, 2)


def global_avg_pool(input) -> Tensor:
    """Mean over each H x W plane: (B, C, H, W) -> (B, C)."""
    input = as_tensor(input)
    if input.ndim != 4 or input.shape[2] * input.shape[3] < 1:
        raise ValueError(f"global_avg_pool expects a non-empty 4-D input, got {input.shape}")
    return GlobalAvgPool.apply(input)


def linear(input, weight, bias) -> Tensor:
    """Affine map x @ weight.T + bias: (B, D) -> (B, K)."""
    input, weight, bias = as_tensor(input), as_tensor(weight), as_tensor(bias)
    if input.ndim != 2 or weight.ndim != 2 or input.shape[1] != weight.shape[1]:
        raise ValueError(
            f"linear dimension mismatch: input {input.shape}, weight {weight.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise ValueError(f"linear bias {bias.shape} does not match weight {weight.shape}")
    return Linear.apply(input, weight, bias)
