"""
Jigsaw pretext task: 3x3 patch shuffling and the self-supervised loss.
"""

from typing import Callable, Optional, Tuple

import numpy as np

from routeseg.autodiff import Tensor, softmax_cross_entropy
from routeseg.jigsaw.permutations import NUM_PATCHES, PermutationSet

GRID = 3


def center_crop_to_multiple_of_3(x: np.ndarray) -> np.ndarray:
    """Center crop of the last two axes to the largest multiples of 3."""
    H, W = x.shape[-2:]
    top, left = (H % GRID) // 2, (W % GRID) // 2
    return x[..., top : top + H - H % GRID, left : left + W - W % GRID]


def apply_jigsaw(image: np.ndarray, perm) -> np.ndarray:
    """
    Rearrange the 3x3 patch grid of the last two axes.

    The patch at grid slot i (row-major) of the output is the input patch
    ``perm[i]``. Works on images (..., C, H, W) and label maps (..., H, W).

    Raises
    ------
    ValueError
        If H or W is not divisible by 3.
    """
    image = np.asarray(image)
    perm = np.asarray(perm)
    if perm.shape != (NUM_PATCHES,):
        raise ValueError(f"a jigsaw permutation has 9 entries, got shape {perm.shape}")
    H, W = image.shape[-2:]
    if H % GRID or W % GRID:
        raise ValueError(f"jigsaw needs height and width divisible by 3, got {H}x{W}")
    lead = image.shape[:-2]
    h, w = H // GRID, W // GRID
    patches = np.swapaxes(image.reshape(lead + (GRID, h, GRID, w)), -3, -2)
    patches = patches.reshape(lead + (NUM_PATCHES, h, w))[..., perm, :, :]
    patches = np.swapaxes(patches.reshape(lead + (GRID, GRID, h, w)), -3, -2)
    return patches.reshape(lead + (H, W))


def make_pretext_batch(
    images: np.ndarray, pset: PermutationSet, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Jigsaw every image with its own uniformly drawn permutation.

    Parameters
    ----------
    images : numpy.ndarray
        (B, C, H, W); center-cropped to multiples of 3 if needed.
    pset : PermutationSet
    rng : numpy.random.Generator

    Returns
    -------
    jigsawed : numpy.ndarray
    targets : numpy.ndarray of int, shape (B,)
        Permutation indices in [0, k).
    """
    images = center_crop_to_multiple_of_3(np.asarray(images))
    targets = rng.integers(0, pset.k, size=len(images))
    if len(images) == 0:
        return images, targets
    jigsawed = np.stack([apply_jigsaw(img, pset[jig]) for img, jig in zip(images, targets)])
    return jigsawed, targets


def make_jigsaw_segmentation_batch(
    images: np.ndarray, masks: np.ndarray, pset: PermutationSet, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Like :func:`make_pretext_batch`, also moving the label map patches with the image."""
    images = center_crop_to_multiple_of_3(np.asarray(images))
    masks = center_crop_to_multiple_of_3(np.asarray(masks))
    targets = rng.integers(0, pset.k, size=len(images))
    jig_images = np.stack([apply_jigsaw(img, pset[jig]) for img, jig in zip(images, targets)])
    jig_masks = np.stack([apply_jigsaw(mask, pset[jig]) for mask, jig in zip(masks, targets)])
    return jig_images, jig_masks, targets


def ssl_loss(labeled_images, unlabeled_images, net, pset: PermutationSet, rng: np.random.Generator) -> Tensor:
    """
    Self-supervised jigsaw loss.

    Mean cross-entropy of the pretext logits against the permutation index,
    on the labeled batch plus on the unlabeled batch. One permutation is
    sampled per image, an unbiased estimate of the average over all k. An
    empty batch contributes 0.
    """
    total = Tensor(0.0)
    for images in (labeled_images, unlabeled_images):
        if images is None or len(images) == 0:
            continue
        jigsawed, targets = make_pretext_batch(images, pset, rng)
        total = total + softmax_cross_entropy(net.pretext_forward(Tensor(jigsawed)), targets)
    return total


def jigsaw_segmentation_loss(
    images, masks, net, pset: PermutationSet, rng: np.random.Generator, loss_fn: Optional[Callable] = None
) -> Tensor:
    """Segmentation loss of jigsawed labeled images against their permuted masks."""
    if images is None or len(images) == 0:
        return Tensor(0.0)
    loss_fn = loss_fn or softmax_cross_entropy
    jig_images, jig_masks, _ = make_jigsaw_segmentation_batch(images, masks, pset, rng)
    return loss_fn(net.forward(Tensor(jig_images)), jig_masks)
