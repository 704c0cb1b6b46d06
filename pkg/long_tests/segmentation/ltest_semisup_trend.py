import numpy as np

from routeseg.data import gen_shapes_dataset, hide_labels, make_split
from routeseg.metrics import evaluate
from routeseg.nets import RoutingConfig
from routeseg.training import TrainConfig, fit

NET_CONFIG = RoutingConfig(num_layers=4, base_channels=8, num_classes=4)
SEEDS = (0, 1, 2)


def split_sets(seed):
    samples = gen_shapes_dataset(64, num_classes=4, size=96, seed=100 + seed)
    by_id = {sample.id: sample for sample in samples}
    split = make_split(samples, "1/8", seed)
    labeled = [by_id[i] for i in split.labeled]
    unlabeled = hide_labels([by_id[i] for i in split.unlabeled])
    return labeled, unlabeled


# mean teacher on 8 labeled / 56 unlabeled images should not be worse than supervised only
def test_mean_teacher_trend():
    val = gen_shapes_dataset(16, num_classes=4, size=96, seed=999)
    supervised, mean_teacher = [], []
    for seed in SEEDS:
        labeled, unlabeled = split_sets(seed)
        common = dict(epochs=2, batch_labeled=2, batch_unlabeled=2, seed=seed)
        net, _ = fit(TrainConfig(method="none", **common), labeled, unlabeled, net_config=NET_CONFIG)
        supervised.append(evaluate(net, val)[0])
        net, _ = fit(
            TrainConfig(method="mean_teacher", lambda2=100.0, rampup_iters=30, **common),
            labeled,
            unlabeled,
            net_config=NET_CONFIG,
        )
        mean_teacher.append(evaluate(net, val)[0])

    supervised, mean_teacher = np.array(supervised), np.array(mean_teacher)
    assert mean_teacher.mean() >= supervised.mean() - 0.01
    assert (mean_teacher >= supervised).sum() >= 2
