from routeseg.data import gen_shapes_dataset
from routeseg.metrics import evaluate
from routeseg.nets import RoutingConfig
from routeseg.training import TrainConfig, fit


# 500 iterations on 10 images, supervised only, at the default network size
def test_supervised_overfit():
    samples = gen_shapes_dataset(10, num_classes=4, size=96, seed=0)
    config = TrainConfig(
        method="none",
        epochs=10,
        iterations_per_epoch=50,
        batch_labeled=2,
        augment=False,
        seed=42,
    )
    net, history = fit(config, samples, net_config=RoutingConfig(num_layers=4, base_channels=8, num_classes=4))

    assert history["iter"].iloc[-1] == 499
    _, pixel_accuracy = evaluate(net, samples)
    assert pixel_accuracy >= 0.95


# full-batch steps on a fixed set: the loss goes down almost every iteration
def test_loss_decreases_early():
    samples = gen_shapes_dataset(10, num_classes=4, size=96, seed=0)
    config = TrainConfig(
        method="none", epochs=1, iterations_per_epoch=20, batch_labeled=10, augment=False, seed=42
    )
    _, history = fit(config, samples, net_config=RoutingConfig(num_layers=4, base_channels=8, num_classes=4))

    losses = history["loss_total"].to_numpy()
    assert len(losses) == 20
    assert (losses[1:] < losses[:-1]).sum() >= 18
