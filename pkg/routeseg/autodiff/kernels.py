from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from routeseg.utils.jit_setup import numba_jit


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


@numba_jit
def conv2d_direct(x, w, stride, padding, groups):
    """
    Direct-loop grouped cross-correlation.

    Parameters
    ----------
    x : numpy.ndarray
        input of shape (B, C, H, W)
    w : numpy.ndarray
        kernel of shape (O, C // groups, kh, kw)
    stride : int
    padding : int
    groups : int

    Returns
    --------
    numpy.ndarray of shape (B, O, H', W')
    """
    B, C, H, W = x.shape
    O, Cg, kh, kw = w.shape
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    out_per_group = O // groups
    out = np.zeros((B, O, Ho, Wo))
    for bb in range(B):
        for oo in range(O):
            c0 = (oo // out_per_group) * Cg
            for yy in range(Ho):
                for xx in range(Wo):
                    acc = 0.0
                    for cc in range(Cg):
                        for ii in range(kh):
                            iy = yy * stride + ii - padding
                            if iy < 0 or iy >= H:
                                continue
                            for jj in range(kw):
                                ix = xx * stride + jj - padding
                                if ix < 0 or ix >= W:
                                    continue
                                acc += x[bb, c0 + cc, iy, ix] * w[oo, cc, ii, jj]
                    out[bb, oo, yy, xx] = acc
    return out


def im2col(x, kh, kw, stride, padding):
    """
    Patch view of ``x``: shape (B, C, H', W', kh, kw).

    The view is read-only and shares memory with the padded input.
    """
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return cols[:, :, ::stride, ::stride]


def col2im(dcols, in_shape, stride, padding):
    """Adjoint of :func:`im2col`: scatter-add patch gradients back to the input."""
    B, C, H, W = in_shape
    _, _, Ho, Wo, kh, kw = dcols.shape
    dx = np.zeros((B, C, H + 2 * padding, W + 2 * padding))
    for ii in range(kh):
        for jj in range(kw):
            dx[
                :,
                :,
                ii : ii + stride * (Ho - 1) + 1 : stride,
                jj : jj + stride * (Wo - 1) + 1 : stride,
            ] += dcols[:, :, :, :, ii, jj]
    if padding > 0:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return dx


@lru_cache(maxsize=64)
def bilinear_matrix(n_in, factor):
    """
    Interpolation matrix A of shape (factor * n_in, n_in) such that A @ v
    resamples v with half-pixel centers (align_corners=False); source
    coordinates falling before the first sample are clamped to it.
    """
    n_out = n_in * factor
    A = np.zeros((n_out, n_in))
    for dst in range(n_out):
        src = max((dst + 0.5) / factor - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0
        A[dst, i0] += 1.0 - frac
        A[dst, i1] += frac
    return A
