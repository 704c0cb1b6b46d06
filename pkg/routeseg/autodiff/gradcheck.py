"""
Central finite-difference verification of analytic gradients.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

import routeseg
from routeseg.autodiff import functional as F
from routeseg.autodiff import losses
from routeseg.autodiff.tensor import (
    Tensor,
    backward,
    no_grad,
    record_relu_masks,
    relu,
    replay_relu_masks,
    softmax,
)
from routeseg.seeding import Seeder

logger = routeseg.logger


@dataclass
class GradCheckResult:
    name: str
    passed: bool
    max_rel_error: float
    max_abs_error: float
    n_checked: int


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, indices, h: float = 1e-4):
    """
    Central differences (f(x + h) - f(x - h)) / 2h of the scalar ``fn()``
    with respect to the flat entries ``indices`` of ``tensor``.

    ``tensor.data`` is modified in place during the evaluation and restored
    afterwards.
    """
    flat = tensor.data.reshape(-1)
    fd = np.empty(len(indices))
    with no_grad():
        for ii, idx in enumerate(indices):
            original = flat[idx]
            flat[idx] = original + h
            f_plus = fn().item()
            flat[idx] = original - h
            f_minus = fn().item()
            flat[idx] = original
            fd[ii] = (f_plus - f_minus) / (2.0 * h)
    return fd


def check_gradient(
    fn: Callable[[], Tensor],
    params: Dict[str, Tensor],
    name: str = "",
    rtol: float = 1e-4,
    atol: float = 1e-7,
    h: float = 1e-4,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckResult:
    """
    Compare backward() against central differences.

    An entry passes if |analytic - fd| / (|fd| + 1e-8) < rtol, or if
    |analytic - fd| < atol (entries whose true derivative is zero up to
    floating point noise).

    Parameters
    ----------
    fn : callable
        Rebuilds the scalar loss from ``params`` on every call.
    params : dict
        Leaf tensors with ``requires_grad=True``.
    name : str
        Label of the check in the report.
    rtol, atol, h : float
    max_entries : int, optional
        If given, at most this many randomly chosen entries are checked per
        tensor.
    rng : numpy.random.Generator, optional
        Used to choose the entries.
    """
    rng = rng or np.random.default_rng(0)
    for tensor in params.values():
        tensor.zero_grad()
    with record_relu_masks() as masks:
        loss = fn()
    backward(loss)

    max_rel, max_abs, n_checked, passed = 0.0, 0.0, 0, True
    for pname, tensor in params.items():
        analytic = np.zeros(tensor.size) if tensor.grad is None else tensor.grad.reshape(-1)
        if max_entries is not None and tensor.size > max_entries:
            indices = rng.choice(tensor.size, size=max_entries, replace=False)
        else:
            indices = np.arange(tensor.size)
        fd = numerical_gradient(lambda: _replayed(fn, masks), tensor, indices, h)
        abs_err = np.abs(analytic[indices] - fd)
        rel_err = abs_err / (np.abs(fd) + 1e-8)
        ok = (rel_err < rtol) | (abs_err < atol)
        if not ok.all():
            passed = False
            logger.debug(f"gradcheck {name}/{pname}: {int((~ok).sum())} entries off")
        max_rel = max(max_rel, float(np.where(abs_err < atol, 0.0, rel_err).max(initial=0.0)))
        max_abs = max(max_abs, float(abs_err.max(initial=0.0)))
        n_checked += len(indices)
    return GradCheckResult(name, passed, max_rel, max_abs, n_checked)


def _replayed(fn, masks):
    with replay_relu_masks(masks):
        return fn()


def _param(rng, *shape, scale=1.0):
    return Tensor(scale * rng.normal(size=shape), requires_grad=True)


def _weighted_sum(out: Tensor, rng) -> Tensor:
    return (out * rng.normal(size=out.shape)).sum()


def builtin_checks(seed: int = 42, rtol: float = 1e-4) -> List[GradCheckResult]:
    """
    Gradient suite: every differentiable operation, cell gating and a
    small full network, each on random small tensors.

    Non-scalar outputs are reduced to a scalar with fixed random weights.
    """
    from routeseg.nets import Cell, RoutingConfig, RoutingNet

    seeder = Seeder(seed)
    rng = seeder.rng
    results = []

    def run(name, build, params, max_entries=None):
        result = check_gradient(build, params, name=name, rtol=rtol, max_entries=max_entries, rng=rng)
        logger.debug(f"gradcheck {name}: passed={result.passed}, max_rel={result.max_rel_error:.2e}")
        results.append(result)

    x, w = _param(rng, 2, 3, 5, 5), _param(rng, 4, 3, 3, 3)
    R = rng.normal(size=(2, 4, 5, 5))
    run("conv2d", lambda: (F.conv2d(x, w, stride=1, padding=1) * R).sum(), dict(input=x, kernel=w))

    x2, w2, b2 = _param(rng, 1, 2, 6, 6), _param(rng, 3, 2, 3, 3), _param(rng, 3)
    R2 = rng.normal(size=(1, 3, 3, 3))
    run(
        "conv2d_stride2",
        lambda: (F.conv2d(x2, w2, stride=2, padding=1, bias=b2) * R2).sum(),
        dict(input=x2, kernel=w2, bias=b2),
    )

    x3, w3 = _param(rng, 2, 3, 4, 4), _param(rng, 3, 1, 3, 3)
    R3 = rng.normal(size=(2, 3, 4, 4))
    run(
        "conv2d_depthwise",
        lambda: (F.conv2d(x3, w3, padding=1, groups=3) * R3).sum(),
        dict(input=x3, kernel=w3),
    )

    dw, pw = _param(rng, 3, 1, 3, 3), _param(rng, 5, 3, 1, 1)
    R4 = rng.normal(size=(2, 5, 2, 2))
    run(
        "separable_conv3x3",
        lambda: (F.separable_conv3x3(x3, dw, pw, stride=2) * R4).sum(),
        dict(input=x3, depthwise=dw, pointwise=pw),
    )

    u = _param(rng, 2, 2, 3, 4)
    R5, R6 = rng.normal(size=(2, 2, 6, 8)), rng.normal(size=(2, 2, 12, 16))
    run("bilinear_upsample2x", lambda: (F.bilinear_upsample2x(u) * R5).sum(), dict(input=u))
    run("bilinear_upsample4x", lambda: (F.bilinear_upsample(u, 4) * R6).sum(), dict(input=u))

    p = _param(rng, 3, 4, 3, 2)
    R7 = rng.normal(size=(3, 4))
    run("global_avg_pool", lambda: (F.global_avg_pool(p) * R7).sum(), dict(input=p))

    xl, wl, bl = _param(rng, 3, 5), _param(rng, 4, 5), _param(rng, 4)
    R8 = rng.normal(size=(3, 4))
    run("linear", lambda: (F.linear(xl, wl, bl) * R8).sum(), dict(input=xl, weight=wl, bias=bl))

    # keep inputs away from the kink
    xr = Tensor(rng.uniform(0.1, 1.0, size=(3, 4)) * rng.choice([-1.0, 1.0], size=(3, 4)), requires_grad=True)
    R9 = rng.normal(size=(3, 4))
    run("relu", lambda: (relu(xr) * R9).sum(), dict(input=xr))

    xs = _param(rng, 2, 3, 2, 2)
    R10 = rng.normal(size=(2, 3, 2, 2))
    run("softmax", lambda: (softmax(xs, axis=1) * R10).sum(), dict(input=xs))

    logits = _param(rng, 2, 3, 4, 4)
    target = rng.integers(0, 3, size=(2, 4, 4))
    target[0, 0, :2] = losses.IGNORE_INDEX
    run("softmax_cross_entropy", lambda: losses.softmax_cross_entropy(logits, target), dict(logits=logits))
    run("ohem_cross_entropy", lambda: losses.ohem_cross_entropy(logits, target), dict(logits=logits))

    ma, mb = _param(rng, 2, 3, 2, 2), _param(rng, 2, 3, 2, 2)
    run("mse_loss", lambda: losses.mse_loss(ma, mb), dict(a=ma, b=mb))

    cell = Cell(layer=0, level=1, base_channels=2, num_levels=4, rng=seeder.spawn(squeeze=True).rng)
    for tensor in cell.parameters():
        tensor.data += 0.5 * rng.normal(size=tensor.shape)
    xc = _param(rng, 1, 4, 4, 4)
    Rc = rng.normal(size=(1, 4, 4, 4))
    run(
        "cell_gating",
        lambda: (cell.forward(xc) * Rc).sum(),
        dict(input=xc, op_gate=cell.op_gate, depthwise=cell.depthwise, pointwise=cell.pointwise),
    )

    config = RoutingConfig(num_layers=1, base_channels=2, num_classes=3, num_permutations=4)
    net = RoutingNet(config, seeder=seeder.spawn(squeeze=True))
    for tensor in net.parameters():
        if tensor.name.endswith("gate"):
            tensor.data += rng.normal(size=tensor.shape)
    images = Tensor(rng.uniform(size=(1, 3, 32, 32)))
    seg_target = rng.integers(0, 3, size=(1, 32, 32))
    jig_target = rng.integers(0, 4, size=(1,))

    def network_loss():
        seg = losses.softmax_cross_entropy(net.forward(images), seg_target)
        return seg + losses.softmax_cross_entropy(net.pretext_forward(images), jig_target)

    run("routing_net", network_loss, dict(net.named_parameters()), max_entries=2)
    return results
