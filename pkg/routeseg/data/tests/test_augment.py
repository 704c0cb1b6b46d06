import numpy as np
import pytest

from routeseg.data import SCALES, Sample, augment, gen_shapes_dataset
from routeseg.data.augment import hflip
from routeseg.seeding import Seeder


@pytest.fixture(scope="module")
def sample():
    return gen_shapes_dataset(1, num_classes=4, size=96, seed=3)[0]


def test_identity(sample):
    out = augment(sample, Seeder(0).rng, crop_size=96, scale=1.0, flip=False)
    assert np.array_equal(out.image, sample.image)
    assert np.array_equal(out.mask, sample.mask)


def test_double_flip_is_identity(sample):
    twice = hflip(hflip(sample))
    assert np.array_equal(twice.image, sample.image)
    assert np.array_equal(twice.mask, sample.mask)
    once = augment(sample, Seeder(0).rng, crop_size=96, scale=1.0, flip=True)
    assert np.array_equal(once.mask, sample.mask[:, ::-1])


def test_padding_after_downscale(sample):
    out = augment(sample, Seeder(1).rng, crop_size=96, scale=0.5, flip=False)
    assert out.image.shape == (3, 96, 96) and out.mask.shape == (96, 96)
    assert (out.mask[48:, :] == 255).all()
    assert (out.mask[:, 48:] == 255).all()
    assert (out.mask[:48, :48] < 4).all()
    assert (out.image[:, 48:, :] == 0.0).all()


@pytest.mark.parametrize("scale", SCALES)
def test_crop_size_and_no_new_labels(sample, scale):
    rng = Seeder(2).rng
    for _ in range(3):
        out = augment(sample, rng, crop_size=96, scale=scale)
        assert out.image.shape == (3, 96, 96)
        classes = set(np.unique(out.mask).tolist()) - {255}
        assert classes <= set(np.unique(sample.mask).tolist())


def test_reproducible(sample):
    a = augment(sample, Seeder(4).rng)
    b = augment(sample, Seeder(4).rng)
    assert a.image.tobytes() == b.image.tobytes()
    assert a.mask.tobytes() == b.mask.tobytes()


def test_scales_are_all_drawn(sample):
    rng = Seeder(5).rng
    sizes = {augment(sample, rng, crop_size=None, flip=False).image.shape[1] for _ in range(200)}
    assert sizes == {48, 72, 96, 120, 144, 192}


def test_unlabeled_sample():
    image = Seeder(6).rng.uniform(size=(3, 96, 96))
    out = augment(Sample(image=image, mask=None, id="u"), Seeder(7).rng, crop_size=64)
    assert out.mask is None and out.image.shape == (3, 64, 64)
