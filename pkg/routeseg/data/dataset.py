"""
Samples and their on-disk layout::

    <root>/images/<id>.ppm
    <root>/masks/<id>.pgm
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

import routeseg
from routeseg.autodiff import IGNORE_INDEX
from routeseg.data.netpbm import read_pgm, read_ppm, write_pgm, write_ppm

logger = routeseg.logger


@dataclass(eq=False)
class Sample:
    """
    One segmentation example.

    Attributes
    ----------
    image : numpy.ndarray
        (3, H, W) floats in [0, 1].
    mask : numpy.ndarray or None
        (H, W) class indices, 255 for ignored pixels; None once labels are hidden.
    id : str
    """

    image: np.ndarray
    mask: Optional[np.ndarray]
    id: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"sample {self.id}: image must have shape (3, H, W), got {self.image.shape}")
        if self.mask is not None and self.mask.shape != self.image.shape[1:]:
            raise ValueError(
                f"sample {self.id}: mask shape {self.mask.shape} does not match image {self.image.shape}"
            )

    @property
    def labeled(self) -> bool:
        return self.mask is not None


def check_mask(mask: np.ndarray, num_classes: int, what: str = "mask"):
    """Raise ValueError unless every value is a class index or the ignore value."""
    bad = (mask != IGNORE_INDEX) & ((mask < 0) | (mask >= num_classes))
    if bad.any():
        raise ValueError(f"{what}: value {mask[bad][0]} is neither in [0, {num_classes}) nor 255")


def hide_labels(samples: Sequence[Sample]) -> List[Sample]:
    """Unlabeled view of the samples (masks dropped)."""
    return [replace(sample, mask=None) for sample in samples]


def stack_batch(samples: Sequence[Sample]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """(B, 3, H, W) images and (B, H, W) masks (None if any sample is unlabeled)."""
    images = np.stack([sample.image for sample in samples])
    if any(sample.mask is None for sample in samples):
        return images, None
    return images, np.stack([sample.mask for sample in samples])


def save_dataset(root, samples: Sequence[Sample]) -> Path:
    """Write every sample as ``images/<id>.ppm`` (+ ``masks/<id>.pgm`` when labeled)."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for sample in samples:
        write_ppm(root / "images" / f"{sample.id}.ppm", sample.image)
        if sample.mask is not None:
            write_pgm(root / "masks" / f"{sample.id}.pgm", sample.mask)
    logger.debug(f"Wrote {len(samples)} samples to {root}.")
    return root


def load_dataset(root, ids: Optional[Sequence[str]] = None, labels: bool = True) -> List[Sample]:
    """
    Read samples back from ``root``.

    Parameters
    ----------
    root : str or Path
    ids : sequence of str, optional
        Samples to read, in this order. Defaults to every image, sorted by id.
    labels : bool, default: True
        If False, masks are not read.
    """
    root = Path(root)
    if not (root / "images").is_dir():
        raise FileNotFoundError(f"no images/ directory under {root}")
    if ids is None:
        ids = sorted(path.stem for path in (root / "images").glob("*.ppm"))
    samples = []
    for sample_id in ids:
        image = read_ppm(root / "images" / f"{sample_id}.ppm")
        mask = read_pgm(root / "masks" / f"{sample_id}.pgm") if labels else None
        samples.append(Sample(image=image, mask=mask, id=sample_id))
    return samples
