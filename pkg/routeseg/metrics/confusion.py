"""
Confusion matrix, mean intersection-over-union and pixel accuracy.
"""

import numpy as np

from routeseg.autodiff import IGNORE_INDEX
from routeseg.types import LabelMap


class ConfusionMatrix:
    """
    Pixel counts ``counts[t, p]`` of true class t predicted as p.

    Pixels whose truth is the ignore value (255) are not counted.

    Parameters
    ----------
    num_classes : int

    Examples
    --------
    >>> cm = ConfusionMatrix(3)
    >>> _ = cm.update(np.array([0, 1, 1, 1, 2, 2]), np.array([0, 0, 1, 1, 2, 2]))
    >>> cm.pixel_accuracy()
    0.8333333333333334
    """

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {num_classes}")
        self.num_classes = int(num_classes)
        self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)

    def reset(self):
        self.counts[...] = 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def update(self, pred: LabelMap, truth: LabelMap) -> "ConfusionMatrix":
        """
        Add the pixels of a prediction / ground truth pair (any equal shapes).

        Raises
        ------
        ValueError
            On a shape mismatch, a predicted class outside [0, K), or a
            truth value that is neither a class nor the ignore value.
        """
        pred = np.asarray(pred)
        truth = np.asarray(truth)
        if pred.shape != truth.shape:
            raise ValueError(f"prediction shape {pred.shape} does not match truth shape {truth.shape}")
        K = self.num_classes
        valid = truth != IGNORE_INDEX
        t, p = truth[valid].astype(np.int64), pred[valid].astype(np.int64)
        if t.size == 0:
            return self
        if t.min() < 0 or t.max() >= K:
            raise ValueError(f"truth values must be in [0, {K}) or 255, got [{t.min()}, {t.max()}]")
        if p.min() < 0 or p.max() >= K:
            raise ValueError(f"predicted classes must be in [0, {K}), got [{p.min()}, {p.max()}]")
        self.counts += np.bincount(K * t + p, minlength=K * K).reshape(K, K)
        return self

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.num_classes != other.num_classes:
            raise ValueError(f"cannot add {self.num_classes}- and {other.num_classes}-class matrices")
        out = ConfusionMatrix(self.num_classes)
        out.counts = self.counts + other.counts
        return out

    def _check_not_empty(self):
        if self.total == 0:
            raise ValueError("the confusion matrix is empty (no non-ignored pixel evaluated)")

    def per_class_iou(self) -> np.ndarray:
        """IoU of every class, NaN for classes absent from both truth and prediction."""
        intersection = np.diag(self.counts).astype(np.float64)
        union = self.counts.sum(axis=0) + self.counts.sum(axis=1) - intersection
        iou = np.full(self.num_classes, np.nan)
        present = union > 0
        iou[present] = intersection[present] / union[present]
        return iou

    def miou(self) -> float:
        """Mean IoU over the classes with a nonzero union."""
        self._check_not_empty()
        return float(np.nanmean(self.per_class_iou()))

    def pixel_accuracy(self) -> float:
        self._check_not_empty()
        return float(np.trace(self.counts) / self.total)

    def __repr__(self):
        return f"ConfusionMatrix(num_classes={self.num_classes}, total={self.total})"
