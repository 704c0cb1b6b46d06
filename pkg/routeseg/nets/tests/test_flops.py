import numpy as np
import pytest

from routeseg.nets import RoutingConfig, RoutingNet, count_flops
from routeseg.seeding import Seeder

# one reachable cell: L=1, C0=2, 2 classes, 4 permutations, 32x32 input
STEM_MACS = (3 * 16 * 16 * 9 + 1 * 3 * 16 * 16) + (1 * 8 * 8 * 9 + 2 * 1 * 8 * 8) + (2 * 8 * 8 * 9 + 2 * 2 * 8 * 8)
CELL_CONV_MACS = 2 * 8 * 8 * 9 + 2 * 2 * 8 * 8
DOWN_MACS = 4 * 2 * 4 * 4
DECODER_MACS = 8 * 16 * 1 * 1 + 4 * 8 * 2 * 2 + 2 * 4 * 4 * 4
HEAD_MACS = 2 * 2 * 8 * 8 + 4 * 16


def one_cell_net():
    return RoutingNet(
        RoutingConfig(num_layers=1, base_channels=2, num_classes=2, num_permutations=4), seeder=0
    )


def randomize_gates(net, rng, scale=3.0):
    for tensor in net.parameters():
        if tensor.name.endswith("gate"):
            tensor.data[:] = scale * rng.normal(size=tensor.shape)


def test_hand_count_everything():
    net = one_cell_net()
    expected = STEM_MACS + CELL_CONV_MACS + DOWN_MACS + DECODER_MACS + HEAD_MACS
    assert expected == 12032
    assert count_flops(net, (1, 3, 32, 32), tau=0.0) == expected


def test_identity_cell_excluded_above_threshold():
    net = one_cell_net()
    cell = net.cells[0][0]
    cell.op_gate.data[:] = [-40.0, 40.0]
    # keep, down: down weight about 0.73
    cell.path_gate.data[:] = [0.0, 1.0]
    expected = STEM_MACS + DOWN_MACS + DECODER_MACS + HEAD_MACS
    assert count_flops(net, (3, 32, 32), tau=0.5) == expected


def test_tau_zero_ignores_gates():
    net = one_cell_net()
    reference = count_flops(net, (1, 3, 64, 64), tau=0.0)
    rng = Seeder(1).rng
    for _ in range(5):
        randomize_gates(net, rng, scale=50.0)
        assert count_flops(net, (1, 3, 64, 64), tau=0.0) == reference


def test_monotone_in_tau():
    rng = Seeder(2).rng
    net = RoutingNet(RoutingConfig(num_layers=4, base_channels=4), seeder=1)
    taus = np.linspace(0.0, 0.95, 20)
    for _ in range(20):
        randomize_gates(net, rng)
        counts = [count_flops(net, (1, 3, 64, 64), tau) for tau in taus]
        assert all(a >= b for a, b in zip(counts[:-1], counts[1:]))


def test_batch_scaling():
    net = one_cell_net()
    assert count_flops(net, (2, 3, 32, 32), tau=0.0) == 2 * count_flops(net, (1, 3, 32, 32), tau=0.0)


def test_default_tau_is_the_configured_threshold():
    config = RoutingConfig(
        num_layers=1, base_channels=2, num_classes=2, num_permutations=4, gate_activation_threshold=0.5
    )
    net = RoutingNet(config, seeder=0)
    cell = net.cells[0][0]
    cell.op_gate.data[:] = [-40.0, 40.0]
    cell.path_gate.data[:] = [0.0, 1.0]
    assert count_flops(net, (1, 3, 32, 32)) == STEM_MACS + DOWN_MACS + DECODER_MACS + HEAD_MACS
    assert count_flops(net, (1, 3, 32, 32)) == count_flops(net, (1, 3, 32, 32), tau=0.5)
    assert count_flops(net, (1, 3, 32, 32)) < count_flops(net, (1, 3, 32, 32), tau=0.0)


@pytest.mark.parametrize("shape", [(1, 3, 30, 32), (1, 1, 32, 32), (32, 32)])
def test_rejects_bad_input_shape(shape):
    with pytest.raises(ValueError):
        count_flops(one_cell_net(), shape)


def test_rejects_bad_tau():
    with pytest.raises(ValueError):
        count_flops(one_cell_net(), (1, 3, 32, 32), tau=1.0)
