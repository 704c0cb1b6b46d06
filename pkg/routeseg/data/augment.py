"""
Training augmentation: random scaling, horizontal flip and square crop.
"""

from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

import routeseg
from routeseg.autodiff import IGNORE_INDEX
from routeseg.data.dataset import Sample

logger = routeseg.logger

SCALES = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)
DEFAULT_CROP_SIZE = 96
IMAGE_PAD_VALUE = 0.0


def rescale(sample: Sample, factor: float) -> Sample:
    """Bilinear rescaling of the image, nearest-neighbor rescaling of the mask."""
    if factor == 1.0:
        return sample
    image = ndimage.zoom(sample.image, (1.0, factor, factor), order=1, mode="nearest")
    mask = None
    if sample.mask is not None:
        mask = ndimage.zoom(sample.mask, factor, order=0, mode="nearest")
    return Sample(image=np.clip(image, 0.0, 1.0), mask=mask, id=sample.id)


def hflip(sample: Sample) -> Sample:
    image = np.ascontiguousarray(sample.image[..., ::-1])
    mask = None if sample.mask is None else np.ascontiguousarray(sample.mask[..., ::-1])
    return Sample(image=image, mask=mask, id=sample.id)


def pad_to(sample: Sample, size: int) -> Sample:
    """Pad bottom and right up to ``size`` (images with 0, masks with the ignore value)."""
    H, W = sample.image.shape[1:]
    pad_h, pad_w = max(0, size - H), max(0, size - W)
    if pad_h == 0 and pad_w == 0:
        return sample
    image = np.pad(sample.image, ((0, 0), (0, pad_h), (0, pad_w)), constant_values=IMAGE_PAD_VALUE)
    mask = None
    if sample.mask is not None:
        mask = np.pad(sample.mask, ((0, pad_h), (0, pad_w)), constant_values=IGNORE_INDEX)
    return Sample(image=image, mask=mask, id=sample.id)


def crop(sample: Sample, top: int, left: int, size: int) -> Sample:
    image = sample.image[:, top : top + size, left : left + size].copy()
    mask = None if sample.mask is None else sample.mask[top : top + size, left : left + size].copy()
    return Sample(image=image, mask=mask, id=sample.id)


def augment(
    sample: Sample,
    rng: np.random.Generator,
    crop_size: Optional[int] = DEFAULT_CROP_SIZE,
    scales: Sequence[float] = SCALES,
    flip_prob: float = 0.5,
    scale: Optional[float] = None,
    flip: Optional[bool] = None,
) -> Sample:
    """
    Random scale, then random horizontal flip, then random square crop.

    Parameters
    ----------
    sample : Sample
    rng : numpy.random.Generator
    crop_size : int or None, default: 96
        Side of the crop. When the scaled image is smaller, it is padded at
        the bottom and right first (images with 0, masks with 255). None
        disables cropping.
    scales : sequence of float
        Factors drawn uniformly.
    flip_prob : float, default: 0.5
    scale, flip : optional
        Force the scale factor or the flip instead of drawing them.

    Returns
    -------
    Sample
    """
    if scale is None:
        scale = float(scales[rng.integers(len(scales))])
    if flip is None:
        flip = bool(rng.random() < flip_prob)

    out = rescale(sample, scale)
    if flip:
        out = hflip(out)
    if crop_size is None:
        return out
    out = pad_to(out, crop_size)
    H, W = out.image.shape[1:]
    top = int(rng.integers(0, H - crop_size + 1))
    left = int(rng.integers(0, W - crop_size + 1))
    return crop(out, top, left, crop_size)


def augment_batch(samples: Sequence[Sample], rng: np.random.Generator, **kwargs):
    return [augment(sample, rng, **kwargs) for sample in samples]
