"""
Mini-batch SGD with heavy-ball momentum and polynomial learning rate decay.
"""

from typing import Dict, List, Optional, Sequence

import numpy as np

from routeseg.autodiff import Tensor


def poly_lr(t: int, T: int, lr0: float = 0.02, power: float = 0.9) -> float:
    """
    Polynomial decay ``lr0 * (1 - t/T)^power``.

    Returns 0 for ``t >= T``.
    """
    if T <= 0:
        raise ValueError(f"the schedule length must be positive, got {T}")
    if t < 0:
        raise ValueError(f"step must be non-negative, got {t}")
    if t >= T:
        return 0.0
    return lr0 * (1.0 - t / T) ** power


class OptimizerState:
    """
    Velocity buffers (one per parameter) and step counter.

    Parameters
    ----------
    params : sequence of Tensor
    momentum : float, default: 0.9
    """

    def __init__(self, params: Sequence[Tensor], momentum: float = 0.9):
        self.params: List[Tensor] = list(params)
        self.momentum = float(momentum)
        self.velocities: List[np.ndarray] = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Velocities keyed by parameter name (or position), plus the step counter."""
        state = {_key(p, ii): v.copy() for ii, (p, v) in enumerate(zip(self.params, self.velocities))}
        state["step"] = np.array(float(self.t))
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        for ii, p in enumerate(self.params):
            key = _key(p, ii)
            if key not in state:
                raise ValueError(f"optimizer state has no velocity for '{key}'")
            value = np.asarray(state[key], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{key}: velocity shape {value.shape} does not match {p.shape}")
            self.velocities[ii][...] = value
        self.t = int(np.asarray(state["step"]).item())


def _key(param: Tensor, index: int) -> str:
    return param.name if param.name else str(index)


def sgd_momentum_step(
    params: Sequence[Tensor],
    grads: Sequence[Optional[np.ndarray]],
    state: OptimizerState,
    lr: float,
):
    """
    In-place update ``v <- momentum * v + g; p <- p - lr * v``.

    A None gradient counts as zero. Increments ``state.t``.
    """
    if len(params) != len(state.velocities) or len(grads) != len(params):
        raise ValueError(
            f"{len(params)} parameters, {len(grads)} gradients, {len(state.velocities)} velocity buffers"
        )
    mu = state.momentum
    for p, g, v in zip(params, grads, state.velocities):
        v *= mu
        if g is not None:
            if g.shape != p.shape:
                raise ValueError(f"{p.name}: gradient shape {g.shape} does not match {p.shape}")
            v += g
        p.data -= lr * v
    state.t += 1
    return params


def step(state: OptimizerState, lr: float):
    """Apply :func:`sgd_momentum_step` with the accumulated ``grad`` of the tracked parameters."""
    return sgd_momentum_step(state.params, [p.grad for p in state.params], state, lr)


def total_loss(sup, ssl, ssup, lambda0: float, lambda1: float, lambda2: float) -> Tensor:
    """
    ``lambda0 * sup + lambda1 * ssl + lambda2 * ssup``.

    Each term may be a Tensor, a number or a zero-argument callable; a
    term whose weight is 0 is never evaluated.
    """
    total = None
    for weight, term in ((lambda0, sup), (lambda1, ssl), (lambda2, ssup)):
        if weight == 0:
            continue
        value = term() if callable(term) else term
        weighted = value * weight if isinstance(value, Tensor) else Tensor(float(value) * weight)
        total = weighted if total is None else total + weighted
    return total if total is not None else Tensor(0.0)
