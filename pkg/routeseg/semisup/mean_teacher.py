"""
Mean teacher: an exponential moving average of the student supplies
consistency targets on labeled and unlabeled images.
"""

from typing import Callable, Dict, Optional, Union

import numpy as np

import routeseg
from routeseg.autodiff import Tensor, mse_loss, no_grad, softmax, softmax_cross_entropy
from routeseg.nets import RoutingNet

logger = routeseg.logger


class TeacherState:
    """
    Shadow weights of a student network.

    The teacher is an independent copy of the student whose parameters never
    require gradients; only :func:`ema_update` changes them.

    Parameters
    ----------
    student : RoutingNet
        Network whose weights initialize the teacher.
    alpha : float, default: 0.99
        EMA coefficient in [0, 1]. 1 freezes the teacher.
    """

    def __init__(self, student: RoutingNet, alpha: float = 0.99):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"EMA coefficient must be in [0, 1], got {alpha}")
        self.alpha = float(alpha)
        self.net = student.copy()
        self.net.set_trainable(False)

    def probabilities(self, images, flip: bool = False) -> np.ndarray:
        """
        Class probability maps (B, K, H, W), computed without gradient tracking.

        If ``flip``, the teacher sees the horizontally flipped images and its
        output is flipped back, so pixels stay aligned with ``images``.
        """
        images = np.asarray(images.data if isinstance(images, Tensor) else images)
        if flip:
            images = images[..., ::-1]
        with no_grad():
            probs = softmax(self.net.forward(Tensor(np.ascontiguousarray(images))), axis=1).data
        return probs[..., ::-1].copy() if flip else probs


def ema_update(
    teacher: TeacherState,
    student_weights: Union[RoutingNet, Dict[str, np.ndarray]],
    t: Optional[int] = None,
    warmup: bool = False,
):
    """
    In-place update of the shadow weights, ``w_teacher <- alpha w_teacher + (1 - alpha) w_student``.

    Parameters
    ----------
    teacher : TeacherState
    student_weights : RoutingNet or dict
        Student network, or a mapping from parameter name to array.
    t : int, optional
        Global step, only used with ``warmup``.
    warmup : bool, default: False
        If True, the coefficient is ``min(1 - 1/(t + 1), alpha)`` so that
        early teachers are true averages of the students seen so far.

    Returns
    -------
    TeacherState
        The updated teacher.
    """
    if isinstance(student_weights, RoutingNet):
        weights = {name: tensor.data for name, tensor in student_weights.named_parameters()}
    else:
        weights = student_weights

    alpha = teacher.alpha
    if warmup and t is not None:
        alpha = min(1.0 - 1.0 / (t + 1), alpha)

    for name, shadow in teacher.net.named_parameters():
        if name not in weights:
            raise ValueError(f"student weights have no parameter '{name}'")
        value = np.asarray(weights[name])
        if value.shape != shadow.shape:
            raise ValueError(
                f"{name}: teacher shape {shadow.shape} does not match student shape {value.shape}"
            )
        shadow.data[...] = alpha * shadow.data + (1.0 - alpha) * value
    return teacher


def consistency_loss(student_logits: Tensor, teacher_probs: np.ndarray) -> Tensor:
    """Squared error between the student's softmax and fixed teacher probabilities, summed over pixels and classes, batch-averaged."""
    return mse_loss(softmax(student_logits, axis=1), Tensor(teacher_probs))


def mt_unsup_loss(
    student: RoutingNet,
    teacher: TeacherState,
    labeled_images,
    unlabeled_images,
    flip_teacher: bool = False,
    labeled_logits: Optional[Tensor] = None,
) -> Tensor:
    """
    Consistency loss on the labeled batch plus on the unlabeled batch.

    Gradients only reach the student. An empty (or None) batch contributes 0.
    ``labeled_logits`` are the student outputs on ``labeled_images`` when
    they were already computed.
    """
    total = Tensor(0.0)
    for images, logits in ((labeled_images, labeled_logits), (unlabeled_images, None)):
        if images is None or len(images) == 0:
            continue
        target = teacher.probabilities(images, flip=flip_teacher)
        if logits is None:
            logits = student.forward(Tensor(images))
        total = total + consistency_loss(logits, target)
    return total


def mt_sup_loss(
    student: RoutingNet,
    teacher: TeacherState,
    images,
    labels,
    loss_fn: Optional[Callable] = None,
    logits: Optional[Tensor] = None,
) -> Tensor:
    """
    Supervised loss of the mean teacher strategy.

    It is computed on the student outputs (``logits``, or a fresh forward
    pass on ``images``), the teacher's weights being an average that
    receives no gradient; see :func:`teacher_sup_loss` for the teacher's own
    value.
    """
    loss_fn = loss_fn or softmax_cross_entropy
    if logits is None:
        logits = student.forward(Tensor(images))
    return loss_fn(logits, labels)


def teacher_sup_loss(teacher: TeacherState, images, labels, loss_fn: Optional[Callable] = None) -> float:
    """Supervised loss of the teacher outputs, as a plain number for logging."""
    loss_fn = loss_fn or softmax_cross_entropy
    with no_grad():
        return loss_fn(teacher.net.forward(Tensor(images)), labels).item()
