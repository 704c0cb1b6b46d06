"""
Synthetic shapes segmentation dataset.

Each image holds 1 to 4 non-overlapping shapes over a noisy background
(class 0). Class ``c >= 1`` is drawn as a disk, a rectangle or a triangle
(``(c - 1) % 3``) in its own saturated color; pixels covered by a shape are
labeled with its class exactly.
"""

import colorsys
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

import routeseg
from routeseg.data.dataset import Sample
from routeseg.seeding import Seeder
from routeseg.utils.jit_setup import numba_jit

logger = routeseg.logger

SHAPE_KINDS = ("disk", "rectangle", "triangle")
MAX_SHAPES = 4
MAX_ATTEMPTS = 50
# network input must be a multiple of 32, jigsaw input a multiple of 3
RECOMMENDED_MULTIPLE = 96


@numba_jit
def rasterize_disk(size, cy, cx, radius):
    """Pixels whose center lies in the disk."""
    out = np.zeros((size, size), dtype=np.bool_)
    r2 = radius * radius
    for i in range(size):
        for j in range(size):
            dy = i + 0.5 - cy
            dx = j + 0.5 - cx
            if dy * dy + dx * dx <= r2:
                out[i, j] = True
    return out


@numba_jit
def rasterize_triangle(size, vertices):
    """Pixels whose center lies in the triangle (either orientation)."""
    out = np.zeros((size, size), dtype=np.bool_)
    y0, x0 = vertices[0, 0], vertices[0, 1]
    y1, x1 = vertices[1, 0], vertices[1, 1]
    y2, x2 = vertices[2, 0], vertices[2, 1]
    for i in range(size):
        for j in range(size):
            py = i + 0.5
            px = j + 0.5
            d0 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
            d1 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
            d2 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
            negative = d0 < 0 or d1 < 0 or d2 < 0
            positive = d0 > 0 or d1 > 0 or d2 > 0
            if not (negative and positive):
                out[i, j] = True
    return out


def rasterize_rectangle(size, top, left, height, width):
    out = np.zeros((size, size), dtype=bool)
    out[top : top + height, left : left + width] = True
    return out


def class_colors(num_classes: int) -> np.ndarray:
    """(num_classes, 3) RGB colors; class 0 (background) gets mid gray."""
    colors = [(0.5, 0.5, 0.5)]
    for c in range(1, num_classes):
        colors.append(colorsys.hsv_to_rgb((c - 1) / max(1, num_classes - 1), 0.85, 0.9))
    return np.array(colors)


def draw_shape(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random placement of one shape of the given kind, as a boolean mask."""
    if kind == "disk":
        radius = rng.uniform(size / 12, size / 5)
        cy, cx = rng.uniform(radius, size - radius, size=2)
        return rasterize_disk(size, cy, cx, radius)
    if kind == "rectangle":
        height, width = rng.integers(size // 8, size // 3 + 1, size=2)
        top = rng.integers(0, size - height + 1)
        left = rng.integers(0, size - width + 1)
        return rasterize_rectangle(size, top, left, height, width)
    if kind == "triangle":
        radius = rng.uniform(size / 8, size / 4)
        cy, cx = rng.uniform(radius, size - radius, size=2)
        angles = rng.uniform(0, 2 * math.pi) + np.array([0.0, 2.0, 4.0]) * math.pi / 3
        angles = angles + rng.uniform(-0.3, 0.3, size=3)
        vertices = np.stack([cy + radius * np.sin(angles), cx + radius * np.cos(angles)], axis=1)
        return rasterize_triangle(size, vertices)
    raise ValueError(f"unknown shape kind '{kind}'")


def gen_shapes_sample(num_classes: int, size: int, seeder: Seeder, sample_id: str = "") -> Sample:
    """One synthetic sample drawn from ``seeder``."""
    rng = seeder.rng
    colors = class_colors(num_classes)
    base = rng.uniform(0.25, 0.75) + rng.uniform(-0.05, 0.05, size=3)
    image = base[:, None, None] + rng.normal(0.0, 0.06, size=(3, size, size))
    mask = np.zeros((size, size), dtype=np.int64)
    occupied = np.zeros((size, size), dtype=bool)

    for _ in range(rng.integers(1, MAX_SHAPES + 1)):
        c = int(rng.integers(1, num_classes))
        kind = SHAPE_KINDS[(c - 1) % len(SHAPE_KINDS)]
        for _ in range(MAX_ATTEMPTS):
            region = draw_shape(kind, size, rng)
            if region.any() and not (region & occupied).any():
                break
        else:
            logger.debug(f"Sample {sample_id}: no free room for another {kind}, skipped.")
            continue
        occupied |= region
        mask[region] = c
        color = colors[c] + rng.uniform(-0.05, 0.05, size=3)
        image[:, region] = color[:, None] + rng.normal(0.0, 0.03, size=(3, int(region.sum())))

    return Sample(image=np.clip(image, 0.0, 1.0), mask=mask, id=sample_id)


def gen_shapes_dataset(
    count: int, num_classes: int, size: int, seed=None, threads: Optional[int] = 1
) -> List[Sample]:
    """
    Generate a synthetic segmentation dataset.

    Parameters
    ----------
    count : int
        Number of samples.
    num_classes : int
        Including the background, >= 2.
    size : int
        Image height and width; a multiple of 96 fits both the network and
        the jigsaw pretext task.
    seed : int or Seeder, optional
    threads : int, default: 1
        Samples are generated from per-sample spawned seeders, so the result
        does not depend on the number of threads.

    Returns
    -------
    list of Sample
        Ids are zero-padded sample indices.
    """
    if num_classes < 2:
        raise ValueError(f"a segmentation dataset needs at least 2 classes, got {num_classes}")
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if size < 8:
        raise ValueError(f"image size must be at least 8, got {size}")
    if size % RECOMMENDED_MULTIPLE:
        logger.warning(
            f"Image size {size} is not a multiple of 96: the network needs multiples of 32 "
            "and the jigsaw task multiples of 3."
        )
    if count == 0:
        return []

    seeders = Seeder(seed).spawn(count, squeeze=False)
    ids = [f"{ii:05d}" for ii in range(count)]

    def make(ii):
        return gen_shapes_sample(num_classes, size, seeders[ii], ids[ii])

    if threads is None or threads <= 1:
        return [make(ii) for ii in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(make, range(count)))
