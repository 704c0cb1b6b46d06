import numpy as np

from routeseg.data import gen_shapes_dataset, hide_labels
from routeseg.metrics import evaluate
from routeseg.nets import RoutingConfig
from routeseg.training import TrainConfig, fit

NET_CONFIG = RoutingConfig(num_layers=4, base_channels=8, num_classes=4, num_permutations=100)


# the jigsaw term is a regularizer: finite losses and no large change of the final mIoU
def test_full_method_smoke():
    labeled = gen_shapes_dataset(8, num_classes=4, size=96, seed=7)
    unlabeled = hide_labels(gen_shapes_dataset(24, num_classes=4, size=96, seed=8))
    val = gen_shapes_dataset(16, num_classes=4, size=96, seed=9)

    gaps = []
    for seed in (0, 1, 2):
        scores = []
        for lambda1 in (0.1, 0.0):
            config = TrainConfig(
                method="full", strategy="mean_teacher", lambda1=lambda1, epochs=1, batch_labeled=2,
                batch_unlabeled=2, seed=seed,
            )
            net, history = fit(config, labeled, unlabeled, net_config=NET_CONFIG)
            assert np.isfinite(history["loss_total"]).all()
            scores.append(evaluate(net, val)[0])
        gaps.append(abs(scores[0] - scores[1]))
    assert np.mean(gaps) <= 0.05
