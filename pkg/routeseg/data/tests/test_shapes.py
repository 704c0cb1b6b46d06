import math

import numpy as np
import pytest

from routeseg.data import gen_shapes_dataset
from routeseg.data.shapes import class_colors, rasterize_disk, rasterize_triangle


def test_generation_is_bit_identical():
    a = gen_shapes_dataset(6, num_classes=4, size=96, seed=7)
    b = gen_shapes_dataset(6, num_classes=4, size=96, seed=7)
    for x, y in zip(a, b):
        assert x.id == y.id
        assert x.image.tobytes() == y.image.tobytes()
        assert x.mask.tobytes() == y.mask.tobytes()


def test_threads_do_not_change_the_result():
    a = gen_shapes_dataset(5, num_classes=3, size=96, seed=8)
    b = gen_shapes_dataset(5, num_classes=3, size=96, seed=8, threads=3)
    assert all(x.mask.tobytes() == y.mask.tobytes() for x, y in zip(a, b))


@pytest.mark.parametrize("num_classes", [2, 4, 7])
def test_masks_and_images_are_valid(num_classes):
    samples = gen_shapes_dataset(8, num_classes=num_classes, size=96, seed=1)
    assert [s.id for s in samples] == [f"{ii:05d}" for ii in range(8)]
    for sample in samples:
        assert sample.image.shape == (3, 96, 96)
        assert sample.image.min() >= 0.0 and sample.image.max() <= 1.0
        assert sample.mask.min() >= 0 and sample.mask.max() < num_classes
        assert (sample.mask > 0).any()
        assert (sample.mask == 0).any()


@pytest.mark.parametrize("radius", [8.0, 12.5, 20.0])
def test_disk_area(radius):
    area = rasterize_disk(64, 32.0, 32.0, radius).sum()
    assert abs(area - math.pi * radius**2) <= 0.05 * math.pi * radius**2


def test_triangle_area_either_orientation():
    vertices = np.array([[0.0, 0.0], [0.0, 20.0], [20.0, 0.0]])
    area = rasterize_triangle(32, vertices).sum()
    assert abs(area - 200) <= 20
    assert rasterize_triangle(32, vertices[::-1].copy()).sum() == area


def test_class_colors_are_distinct():
    colors = class_colors(6)
    assert colors.shape == (6, 3)
    assert len(np.unique(colors.round(6), axis=0)) == 6


def test_empty_dataset():
    assert gen_shapes_dataset(0, num_classes=3, size=96, seed=0) == []


def test_rejects_single_class():
    with pytest.raises(ValueError):
        gen_shapes_dataset(2, num_classes=1, size=96, seed=0)


def test_warns_on_unaligned_size(caplog):
    gen_shapes_dataset(1, num_classes=3, size=64, seed=0)
    assert "multiple of 96" in caplog.text
