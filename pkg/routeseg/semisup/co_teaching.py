"""
Co-teaching with cross pseudo supervision: two independently trained
networks label the images for each other.
"""

from concurrent.futures import Executor
from typing import Callable, Optional, Tuple

import numpy as np

import routeseg
from routeseg.autodiff import Tensor, softmax_cross_entropy
from routeseg.nets import RoutingNet

logger = routeseg.logger


class PeerPair:
    """
    Two networks with the same configuration and independent weights.

    Parameters
    ----------
    net_a, net_b : RoutingNet
    """

    def __init__(self, net_a: RoutingNet, net_b: RoutingNet):
        if net_a.config != net_b.config:
            raise ValueError(f"peer networks must share a config, got {net_a.config} and {net_b.config}")
        if net_a is net_b:
            logger.warning("Both peers are the same network object, weights will not evolve independently.")
        self.net_a = net_a
        self.net_b = net_b

    def swapped(self) -> "PeerPair":
        return PeerPair(self.net_b, self.net_a)

    def zero_grad(self):
        self.net_a.zero_grad()
        self.net_b.zero_grad()


def ct_pseudo_labels(probs) -> np.ndarray:
    """
    Per-pixel argmax class index of (B, K, H, W) probabilities (or logits).

    The result is a plain integer array, hence outside of any gradient
    graph. Ties go to the lowest class index.
    """
    data = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    return np.argmax(data, axis=1)


def cps_loss(logits_a: Tensor, logits_b: Tensor) -> Tensor:
    """Cross pseudo supervision on one batch: CE(a, argmax b) + CE(b, argmax a)."""
    return softmax_cross_entropy(logits_a, ct_pseudo_labels(logits_b)) + softmax_cross_entropy(
        logits_b, ct_pseudo_labels(logits_a)
    )


def _forward(net: RoutingNet, images: np.ndarray, flip: bool) -> Tensor:
    if not flip:
        return net.forward(Tensor(images))
    return net.forward(Tensor(np.ascontiguousarray(images[..., ::-1]))).flip(axis=-1)


def pair_forward(
    pair: PeerPair, images, executor: Optional[Executor] = None, flip_b: bool = False
) -> Tuple[Tensor, Tensor]:
    """
    Segmentation logits of both peers on the same images.

    With an executor, the second forward pass runs concurrently with the
    first. With ``flip_b``, peer b sees the horizontally flipped images and
    its logits are flipped back.
    """
    images = np.asarray(images)
    if executor is None:
        return _forward(pair.net_a, images, False), _forward(pair.net_b, images, flip_b)
    future_b = executor.submit(_forward, pair.net_b, images, flip_b)
    logits_a = _forward(pair.net_a, images, False)
    return logits_a, future_b.result()


def ct_unsup_loss(
    pair: PeerPair,
    labeled_images,
    unlabeled_images,
    executor: Optional[Executor] = None,
    flip_b: bool = False,
    labeled_logits: Optional[Tuple[Tensor, Tensor]] = None,
) -> Tensor:
    """
    Cross pseudo supervision on the unlabeled batch plus on the labeled batch.

    Ground truth of the labeled images is not used. An empty (or None)
    batch contributes 0. ``labeled_logits`` are the outputs of
    :func:`pair_forward` on ``labeled_images`` when they were already
    computed.
    """
    total = Tensor(0.0)
    for images, logits in ((unlabeled_images, None), (labeled_images, labeled_logits)):
        if images is None or len(images) == 0:
            continue
        if logits is None:
            logits = pair_forward(pair, images, executor, flip_b)
        total = total + cps_loss(*logits)
    return total


def ct_sup_loss(
    pair: PeerPair,
    images,
    labels,
    loss_fn: Optional[Callable] = None,
    executor: Optional[Executor] = None,
    logits: Optional[Tuple[Tensor, Tensor]] = None,
) -> Tensor:
    """Supervised loss of both peers, summed. ``logits`` reuses an earlier :func:`pair_forward`."""
    loss_fn = loss_fn or softmax_cross_entropy
    logits_a, logits_b = logits if logits is not None else pair_forward(pair, images, executor)
    return loss_fn(logits_a, labels) + loss_fn(logits_b, labels)
