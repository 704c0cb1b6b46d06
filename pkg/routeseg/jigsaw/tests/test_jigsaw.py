import math

import numpy as np
import pytest

from routeseg.autodiff import Tensor, check_gradient
from routeseg.jigsaw import (
    PermutationSet,
    apply_jigsaw,
    center_crop_to_multiple_of_3,
    generate_permutation_set,
    jigsaw_segmentation_loss,
    make_pretext_batch,
    ssl_loss,
)
from routeseg.nets import RoutingConfig, RoutingNet
from routeseg.seeding import Seeder

IDENTITY = np.arange(9)


class FixedLogitsNet:
    def __init__(self, logits):
        self.logits = logits
        self.calls = 0

    def pretext_forward(self, images):
        out = Tensor(self.logits[self.calls])
        self.calls += 1
        return out


def test_single_permutation():
    pset = generate_permutation_set(1, seed=3)
    assert pset.k == 1
    assert math.isinf(pset.min_hamming_distance())


def test_two_permutations_differ_everywhere():
    pset = generate_permutation_set(2, seed=3)
    assert (pset[0] != pset[1]).all()
    assert pset.min_hamming_distance() == 9


def test_hundred_permutations_regression():
    pset = generate_permutation_set(100, seed=0)
    assert pset.k == 100
    assert len(np.unique(pset.perms, axis=0)) == 100
    assert pset.min_hamming_distance() >= 5


def test_generation_is_deterministic():
    a = generate_permutation_set(100, seed=11)
    b = generate_permutation_set(100, seed=11)
    assert a.perms.tobytes() == b.perms.tobytes()
    assert not np.array_equal(a.perms, generate_permutation_set(100, seed=12).perms)


def test_tiny_pool_still_gives_distinct_permutations():
    pset = generate_permutation_set(20, seed=1, pool_size=1)
    assert pset.k == 20
    assert len(np.unique(pset.perms, axis=0)) == 20


@pytest.mark.parametrize("k", [0, math.factorial(9) + 1])
def test_invalid_k(k):
    with pytest.raises(ValueError):
        generate_permutation_set(k, seed=0)


def test_permutation_set_validation():
    with pytest.raises(ValueError):
        PermutationSet([[0, 1, 2, 3, 4, 5, 6, 7, 7]])
    with pytest.raises(ValueError):
        PermutationSet([IDENTITY, IDENTITY])


def test_save_load(tmp_path):
    pset = generate_permutation_set(10, seed=4)
    path = pset.save(tmp_path / "perms.txt")
    lines = path.read_text().splitlines()
    assert lines[0] == "10 4"
    assert lines[1] == " ".join(str(v) for v in pset[0])
    loaded = PermutationSet.load(path)
    assert loaded == pset and loaded.seed == 4


def test_identity_jigsaw():
    x = Seeder(1).rng.normal(size=(2, 3, 6, 9))
    assert np.array_equal(apply_jigsaw(x, IDENTITY), x)


def test_inverse_round_trip_and_multiset():
    pset = generate_permutation_set(10, seed=2)
    x = Seeder(2).rng.normal(size=(3, 12, 6))
    for i in range(pset.k):
        y = apply_jigsaw(x, pset[i])
        assert np.array_equal(np.sort(y, axis=None), np.sort(x, axis=None))
        assert apply_jigsaw(y, pset.inverse(i)).tobytes() == x.tobytes()


def test_swap_corners():
    x = np.arange(9.0).reshape(3, 3)
    perm = IDENTITY.copy()
    perm[0], perm[8] = 8, 0
    y = apply_jigsaw(x, perm)
    assert y[0, 0] == 8.0 and y[2, 2] == 0.0
    y[0, 0], y[2, 2] = 0.0, 8.0
    assert np.array_equal(y, x)


def test_slot_receives_source_patch():
    x = np.repeat(np.repeat(np.arange(9.0).reshape(3, 3), 2, axis=0), 2, axis=1)
    perm = np.array([4, 0, 1, 2, 3, 5, 6, 7, 8])
    y = apply_jigsaw(x, perm)
    for slot in range(9):
        r, c = divmod(slot, 3)
        assert (y[2 * r : 2 * r + 2, 2 * c : 2 * c + 2] == perm[slot]).all()


def test_indivisible_rejected():
    with pytest.raises(ValueError):
        apply_jigsaw(np.zeros((1, 4, 6)), IDENTITY)


def test_center_crop():
    x = np.arange(8 * 7).reshape(8, 7)
    crop = center_crop_to_multiple_of_3(x)
    assert crop.shape == (6, 6)
    assert crop[0, 0] == x[1, 0]


def test_pretext_batch_reproducible_and_in_range():
    pset = generate_permutation_set(10, seed=0)
    images = Seeder(5).rng.uniform(size=(8, 3, 9, 9))
    a, ta = make_pretext_batch(images, pset, Seeder(6).rng)
    b, tb = make_pretext_batch(images, pset, Seeder(6).rng)
    assert np.array_equal(a, b) and np.array_equal(ta, tb)
    assert ((ta >= 0) & (ta < 10)).all()
    for img, jig, out in zip(images, ta, a):
        assert np.array_equal(out, apply_jigsaw(img, pset[jig]))


def test_pretext_targets_uniform():
    pset = generate_permutation_set(4, seed=0)
    n = 100_000
    _, targets = make_pretext_batch(np.zeros((n, 1, 3, 3)), pset, Seeder(7).rng)
    counts = np.bincount(targets, minlength=4)
    sigma = math.sqrt(n * 0.25 * 0.75)
    assert (np.abs(counts - n / 4) < 3 * sigma).all()


def test_ssl_loss_zero_head_is_log_k():
    k = 6
    net = RoutingNet(RoutingConfig(num_layers=3, base_channels=2, num_permutations=k), seeder=0)
    net["pretext_head.weight"].data[:] = 0.0
    pset = generate_permutation_set(k, seed=0)
    rng = Seeder(8).rng
    images = rng.uniform(size=(2, 3, 96, 96))
    assert abs(ssl_loss(images, images, net, pset, rng).item() - 2 * math.log(k)) < 1e-12
    assert abs(ssl_loss(images, [], net, pset, rng).item() - math.log(k)) < 1e-12


def test_ssl_loss_matches_oracle():
    pset = generate_permutation_set(3, seed=0)
    logits = [np.array([[2.0, 0.0, -1.0], [0.5, 0.5, 3.0]]), np.array([[1.0, 1.0, 1.0]])]
    images_l = np.zeros((2, 3, 9, 9))
    images_u = np.zeros((1, 3, 9, 9))
    loss = ssl_loss(images_l, images_u, FixedLogitsNet(logits), pset, Seeder(9).rng)

    rng = Seeder(9).rng
    targets = [rng.integers(0, 3, size=2), rng.integers(0, 3, size=1)]
    expected = 0.0
    for z, t in zip(logits, targets):
        terms = [math.log(sum(math.exp(v) for v in row)) - row[j] for row, j in zip(z, t)]
        expected += sum(terms) / len(terms)
    assert abs(loss.item() - expected) < 1e-12


def test_ssl_loss_differentiable_in_pretext_head():
    net = RoutingNet(RoutingConfig(num_layers=3, base_channels=2, num_permutations=4), seeder=1)
    pset = generate_permutation_set(4, seed=0)
    images = Seeder(10).rng.uniform(size=(2, 3, 96, 96))
    params = {"weight": net["pretext_head.weight"], "bias": net["pretext_head.bias"]}
    result = check_gradient(
        lambda: ssl_loss(images, None, net, pset, np.random.default_rng(0)), params, max_entries=10
    )
    assert result.passed, result


def test_jigsaw_segmentation_loss_runs():
    net = RoutingNet(RoutingConfig(num_layers=1, base_channels=2, num_classes=3), seeder=2)
    pset = generate_permutation_set(5, seed=0)
    rng = Seeder(11).rng
    images = rng.uniform(size=(1, 3, 96, 96))
    masks = rng.integers(0, 3, size=(1, 96, 96))
    loss = jigsaw_segmentation_loss(images, masks, net, pset, rng)
    assert np.isfinite(loss.item()) and loss.requires_grad
