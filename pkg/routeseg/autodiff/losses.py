"""
Segmentation and classification losses.

Cross-entropy variants accept logits of shape (B, K) with targets (B,), or
(B, K, H, W) with targets (B, H, W). Target positions equal to
``ignore_index`` contribute nothing.
"""

from typing import Optional

import numpy as np
from scipy.special import logsumexp

import routeseg
from routeseg.autodiff.tensor import Function, Tensor, as_tensor

logger = routeseg.logger

IGNORE_INDEX = 255


class WeightedNLL(Function):
    """
    Fused log-softmax and weighted negative log-likelihood:
    sum over positions of ``weights * -log softmax(logits)[target]``.
    """

    def forward(self, logits, target, weights):
        z = np.moveaxis(logits, 1, -1)
        log_probs = z - logsumexp(z, axis=-1, keepdims=True)
        self.log_probs = log_probs
        self.target = target[..., None]
        self.weights = weights
        nll = -np.take_along_axis(log_probs, self.target, axis=-1)[..., 0]
        return np.asarray((weights * nll).sum())

    def backward(self, grad):
        g = np.exp(self.log_probs) * self.weights[..., None]
        hot = np.take_along_axis(g, self.target, axis=-1)
        np.put_along_axis(g, self.target, hot - self.weights[..., None], axis=-1)
        return (np.moveaxis(g * grad, -1, 1),)


def _check_targets(logits: Tensor, target, ignore_index):
    target = np.asarray(target)
    expected = logits.shape[:1] + logits.shape[2:]
    if logits.ndim < 2 or target.shape != expected:
        raise ValueError(
            f"targets of shape {target.shape} do not match logits {logits.shape}, "
            f"expected {expected}"
        )
    target = target.astype(np.int64)
    valid = target != ignore_index
    n_classes = logits.shape[1]
    bad = valid & ((target < 0) | (target >= n_classes))
    if bad.any():
        raise ValueError(
            f"target values must be in [0, {n_classes}) or {ignore_index}, "
            f"found {np.unique(target[bad]).tolist()}"
        )
    # ignored positions point at class 0 with weight 0
    return np.where(valid, target, 0), valid


def _true_class_probability(logits: Tensor, safe_target):
    z = np.moveaxis(logits.data, 1, -1)
    log_probs = z - logsumexp(z, axis=-1, keepdims=True)
    return np.exp(np.take_along_axis(log_probs, safe_target[..., None], axis=-1)[..., 0])


def _weighted(logits, safe_target, selected) -> Tensor:
    n_selected = int(selected.sum())
    if n_selected == 0:
        logger.warning("Cross-entropy: every target position is ignored, loss defined as 0.")
        return Tensor(0.0)
    weights = selected.astype(np.float64) / n_selected
    return WeightedNLL.apply(logits, target=safe_target, weights=weights)


def softmax_cross_entropy(logits, target, ignore_index: int = IGNORE_INDEX) -> Tensor:
    """
    Mean over non-ignored positions of -log softmax(logits)[target].

    Parameters
    ----------
    logits : Tensor
        shape (B, K) or (B, K, H, W)
    target : array-like of int
        class indices, shape (B,) or (B, H, W)
    ignore_index : int, default: 255

    Returns
    -------
    Scalar Tensor. If every position is ignored the loss is 0 and a warning
    is logged.
    """
    logits = as_tensor(logits)
    safe_target, valid = _check_targets(logits, target, ignore_index)
    return _weighted(logits, safe_target, valid)


def ohem_cross_entropy(
    logits,
    target,
    ignore_index: int = IGNORE_INDEX,
    keep_threshold: float = 0.7,
    min_kept: Optional[int] = None,
) -> Tensor:
    """
    Cross-entropy restricted to hard positions (online hard example mining).

    Positions whose true-class probability is below ``keep_threshold`` are
    kept; if fewer than ``min_kept`` qualify, the ``min_kept`` lowest
    probability positions are used instead.

    Parameters
    ----------
    logits : Tensor
        shape (B, K) or (B, K, H, W)
    target : array-like of int
    ignore_index : int, default: 255
    keep_threshold : float, default: 0.7
    min_kept : int, optional
        At least 1. Defaults to 1/16 of the valid positions (at least 1).
        When fewer valid positions exist, all of them are used.
    """
    assert min_kept is None or min_kept >= 1, "min_kept must be at least 1"
    logits = as_tensor(logits)
    safe_target, valid = _check_targets(logits, target, ignore_index)
    n_valid = int(valid.sum())
    if n_valid == 0:
        return _weighted(logits, safe_target, valid)
    if min_kept is None:
        min_kept = max(1, n_valid // 16)

    p_true = _true_class_probability(logits, safe_target)
    selected = valid & (p_true < keep_threshold)
    if selected.sum() < min_kept:
        if n_valid < min_kept:
            logger.debug(f"OHEM: {n_valid} valid positions, fewer than min_kept={min_kept}.")
        n_kept = min(min_kept, n_valid)
        flat_valid = np.flatnonzero(valid)
        order = np.argsort(p_true.reshape(-1)[flat_valid], kind="stable")
        selected = np.zeros(valid.size, dtype=bool)
        selected[flat_valid[order[:n_kept]]] = True
        selected = selected.reshape(valid.shape)
    return _weighted(logits, safe_target, selected)


def mse_loss(a, b) -> Tensor:
    """
    Squared difference summed over every non-batch axis, averaged over the
    batch (first) axis.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mse_loss needs identical shapes, got {a.shape} and {b.shape}")
    if a.ndim == 0 or a.shape[0] == 0:
        raise ValueError(f"mse_loss needs a non-empty batch axis, got shape {a.shape}")
    diff = a - b
    return (diff * diff).sum() * (1.0 / a.shape[0])
