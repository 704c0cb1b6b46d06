import logging

import numpy as np
import pandas as pd
import pytest

from routeseg.data import gen_shapes_dataset, hide_labels
from routeseg.metrics import evaluate
from routeseg.nets import RoutingConfig, load_net
from routeseg.seeding import Seeder
from routeseg.training import trainer as trainer_module
from routeseg.training import (
    METRICS_COLUMNS,
    SegmentationTrainer,
    TrainConfig,
    WrapSampler,
    fit,
    poly_lr,
)

NET_CONFIG = RoutingConfig(num_layers=1, base_channels=2, num_classes=3, num_permutations=4)
QUIET = dict(name="test", print_log=False)


@pytest.fixture(scope="module")
def labeled():
    return gen_shapes_dataset(2, num_classes=3, size=96, seed=11)


@pytest.fixture(scope="module")
def unlabeled():
    return hide_labels(gen_shapes_dataset(3, num_classes=3, size=96, seed=12))


def make_trainer(labeled, unlabeled=(), val=(), output_dir=None, **kwargs):
    kwargs.setdefault("seed", 3)
    kwargs.setdefault("batch_labeled", 1)
    kwargs.setdefault("batch_unlabeled", 1)
    config = TrainConfig(**kwargs)
    return SegmentationTrainer(
        labeled,
        unlabeled,
        val,
        config=config,
        net_config=NET_CONFIG,
        output_dir=output_dir,
        writer_kwargs=QUIET,
    )


def same_weights(net_a, net_b):
    state_b = net_b.state_dict()
    return all(np.array_equal(value, state_b[name]) for name, value in net_a.state_dict().items())


def test_wrap_sampler_visits_every_sample_once_per_pass():
    sampler = WrapSampler(list(range(5)), batch_size=2, rng=Seeder(0).rng)
    drawn = sum((sampler.next_batch() for _ in range(5)), [])
    assert sorted(drawn[:5]) == list(range(5))
    assert sorted(drawn[5:]) == list(range(5))


def test_zero_epochs_leaves_weights_unchanged(labeled):
    trainer = make_trainer(labeled, epochs=0)
    before = trainer.net.copy()
    trainer.fit()
    assert trainer.t == 0
    assert same_weights(trainer.net, before)
    assert len(trainer.history) == 0


def test_iterations_per_epoch(labeled, unlabeled):
    assert make_trainer(labeled, unlabeled, method="mean_teacher").iterations_per_epoch == 3
    assert make_trainer(labeled, unlabeled, method="none").iterations_per_epoch == 2
    assert make_trainer(labeled, unlabeled, iterations_per_epoch=1).iterations_per_epoch == 1


def test_training_is_deterministic(labeled, unlabeled):
    runs = [make_trainer(labeled, unlabeled, method="mean_teacher").fit() for _ in range(2)]
    assert same_weights(runs[0].net, runs[1].net)
    assert same_weights(runs[0].teacher.net, runs[1].teacher.net)
    pd.testing.assert_frame_equal(runs[0].history, runs[1].history)


def test_supervised_step_changes_weights(labeled):
    trainer = make_trainer(labeled, method="none", iterations_per_epoch=1)
    before = trainer.net.copy()
    trainer.fit()
    assert not same_weights(trainer.net, before)
    row = trainer.history.iloc[0]
    assert row["lr"] == 0.02
    assert row["loss_total"] == pytest.approx(row["loss_sup"])
    assert np.isnan(row["loss_ssl"]) and np.isnan(row["loss_ssup"])


def test_zero_lambda2_matches_supervised_run(labeled, unlabeled):
    supervised = make_trainer(labeled, unlabeled, method="none").fit()
    disabled = make_trainer(labeled, unlabeled, method="mean_teacher", lambda2=0.0).fit()
    assert disabled.teacher is None
    assert same_weights(supervised.net, disabled.net)


def test_zero_lambda1_matches_strategy_run(labeled, unlabeled):
    co_teaching = make_trainer(labeled, unlabeled, method="co_teaching", iterations_per_epoch=1).fit()
    full = make_trainer(
        labeled, unlabeled, method="full", strategy="co_teaching", lambda1=0.0, iterations_per_epoch=1
    ).fit()
    assert full.permutations is None
    assert same_weights(co_teaching.net, full.net)
    assert same_weights(co_teaching.peers.net_b, full.peers.net_b)


def test_teacher_is_an_average_and_gets_no_gradient(labeled, unlabeled):
    trainer = make_trainer(labeled, unlabeled, method="mean_teacher", iterations_per_epoch=1)
    start = trainer.net.copy()
    trainer.fit()
    student = trainer.net.state_dict()
    for name, tensor in trainer.teacher.net.named_parameters():
        assert tensor.grad is None
        expected = 0.99 * start[name].data + 0.01 * student[name]
        assert np.allclose(tensor.data, expected, rtol=0, atol=1e-12)
    row = trainer.history.iloc[0]
    assert np.isfinite(row["loss_ssup"]) and row["loss_ssup"] >= 0
    assert "loss_teacher_sup" in trainer.writer.data["tag"].unique()


def test_co_teaching_trains_both_peers(labeled, unlabeled):
    trainer = make_trainer(labeled, unlabeled, method="co_teaching", iterations_per_epoch=1)
    start_a, start_b = trainer.peers.net_a.copy(), trainer.peers.net_b.copy()
    assert not same_weights(start_a, start_b)
    trainer.fit()
    assert not same_weights(trainer.peers.net_a, start_a)
    assert not same_weights(trainer.peers.net_b, start_b)
    assert trainer.peer_optimizer.t == trainer.optimizer.t == 1


@pytest.mark.parametrize(
    "method, sup_name, ssup_name",
    [
        ("mean_teacher", "mt_sup_loss", "mt_unsup_loss"),
        ("co_teaching", "ct_sup_loss", "ct_unsup_loss"),
    ],
)
def test_losses_come_from_the_strategy_operations(monkeypatch, labeled, unlabeled, method, sup_name, ssup_name):
    values = {}

    def spy(name):
        original = getattr(trainer_module, name)

        def wrapped(*args, **kwargs):
            values[name] = original(*args, **kwargs)
            return values[name]

        monkeypatch.setattr(trainer_module, name, wrapped)

    spy(sup_name)
    spy(ssup_name)
    trainer = make_trainer(labeled, unlabeled, method=method, iterations_per_epoch=1).fit()
    row = trainer.history.iloc[0]
    assert row["loss_sup"] == values[sup_name].item()
    assert row["loss_ssup"] == values[ssup_name].item()


def test_jigsaw_term_is_logged(labeled, unlabeled):
    trainer = make_trainer(labeled, unlabeled, method="ssl_only", iterations_per_epoch=1).fit()
    assert len(trainer.permutations) == NET_CONFIG.num_permutations
    row = trainer.history.iloc[0]
    assert np.isfinite(row["loss_ssl"])
    assert np.isnan(row["loss_ssup"])
    assert row["loss_total"] == pytest.approx(row["loss_sup"] + 0.1 * row["loss_ssl"])


def test_ohem_and_independent_augmentation_run(labeled, unlabeled):
    trainer = make_trainer(
        labeled,
        unlabeled,
        method="mean_teacher",
        loss="ohem",
        independent_augmentation=True,
        iterations_per_epoch=2,
    ).fit()
    assert np.isfinite(trainer.history["loss_total"]).all()


def test_lambda2_rampup(labeled, unlabeled):
    trainer = make_trainer(labeled, unlabeled, method="mean_teacher", rampup_iters=10)
    assert trainer.lambda2_at(0) == pytest.approx(100.0 * np.exp(-5.0))
    assert trainer.lambda2_at(10) == 100.0
    assert make_trainer(labeled, unlabeled, method="mean_teacher").lambda2_at(0) == 100.0


def test_metrics_file(tmp_path, labeled, unlabeled):
    trainer = make_trainer(labeled, unlabeled, val=labeled, output_dir=tmp_path, method="none", epochs=2)
    trainer.fit()
    path = tmp_path / "metrics.csv"
    assert path.read_text().splitlines()[0] == ",".join(METRICS_COLUMNS)
    assert path.read_text().splitlines()[0] == "iter,epoch,lr,loss_total,loss_sup,loss_ssl,loss_ssup,miou_val"
    metrics = pd.read_csv(path)
    assert list(metrics["iter"]) == [0, 1, 2, 3]
    assert list(metrics["epoch"]) == [0, 0, 1, 1]
    assert metrics["loss_ssl"].isna().all()
    assert metrics["miou_val"].notna().tolist() == [False, True, False, True]
    assert metrics["lr"].iloc[-1] == pytest.approx(poly_lr(3, 4))


def test_log_interval_keeps_last_iteration(labeled, unlabeled):
    trainer = make_trainer(labeled, unlabeled, method="mean_teacher", log_interval=2).fit()
    assert list(trainer.history["iter"]) == [0, 2]
    trainer = make_trainer(labeled, method="none", log_interval=5).fit()
    assert list(trainer.history["iter"]) == [0, 1]


def test_checkpoints_reproduce_evaluation(tmp_path, labeled):
    trainer = make_trainer(labeled, output_dir=tmp_path, method="none", epochs=1)
    trainer.fit()
    assert (tmp_path / "checkpoints" / "epoch_1.seln").exists()
    loaded, extra = load_net(tmp_path / "checkpoints" / "last.seln")
    assert evaluate(loaded, labeled) == evaluate(trainer.net, labeled)
    assert extra["trainer/t"].item() == 2


def test_resume_continues_the_schedule(tmp_path, labeled, unlabeled):
    kwargs = dict(
        method="mean_teacher", epochs=2, iterations_per_epoch=1, seed=3, batch_labeled=1, batch_unlabeled=1
    )
    config = TrainConfig(**kwargs)
    first = make_trainer(labeled, unlabeled, **kwargs)
    first.fit(budget=1)
    path = first.save(tmp_path / "half.seln")

    resumed = SegmentationTrainer.load(
        path, labeled=labeled, unlabeled=unlabeled, config=config, net_config=NET_CONFIG, writer_kwargs=QUIET
    )
    assert (resumed.t, resumed.epoch) == (1, 1)
    assert same_weights(resumed.net, first.net)
    assert same_weights(resumed.teacher.net, first.teacher.net)
    assert np.array_equal(resumed.optimizer.velocities[0], first.optimizer.velocities[0])

    resumed.fit()
    assert (resumed.t, resumed.epoch) == (2, 2)
    row = resumed.history.iloc[0]
    assert row["iter"] == 1
    assert row["lr"] == pytest.approx(poly_lr(1, 2))


def test_resume_in_place_keeps_earlier_metrics(tmp_path, labeled, unlabeled):
    kwargs = dict(method="mean_teacher", epochs=2, iterations_per_epoch=2)
    make_trainer(labeled, unlabeled, output_dir=tmp_path, **kwargs).fit()
    before = pd.read_csv(tmp_path / "metrics.csv")
    assert list(before["iter"]) == [0, 1, 2, 3]

    resumed = make_trainer(labeled, unlabeled, output_dir=tmp_path, **kwargs)
    resumed.resume(tmp_path / "checkpoints" / "epoch_1.seln")
    assert list(resumed.history["iter"]) == [0, 1]
    resumed.fit()
    after = pd.read_csv(tmp_path / "metrics.csv")
    assert list(after["iter"]) == [0, 1, 2, 3]
    pd.testing.assert_frame_equal(after.iloc[:2], before.iloc[:2])


def test_resume_rejects_other_network(tmp_path, labeled):
    path = make_trainer(labeled, method="none", epochs=0).save(tmp_path / "net.seln")
    other = SegmentationTrainer(
        labeled, config=TrainConfig(), net_config=RoutingConfig(num_layers=1, base_channels=4, num_classes=3)
    )
    with pytest.raises(ValueError):
        other.resume(path)


def test_empty_unlabeled_set_warns(caplog, labeled):
    with caplog.at_level(logging.WARNING, logger="routeseg_logger"):
        trainer = make_trainer(labeled, method="mean_teacher", iterations_per_epoch=1)
    assert "No unlabeled batch" in caplog.text
    trainer.fit()
    assert np.isfinite(trainer.history["loss_ssup"].iloc[0])


def test_labeled_set_must_be_labeled(labeled):
    with pytest.raises(ValueError):
        make_trainer([])
    with pytest.raises(ValueError):
        make_trainer(hide_labels(labeled))


def test_module_level_fit(labeled):
    config = TrainConfig(method="none", seed=0, batch_labeled=1, iterations_per_epoch=2)
    net, history = fit(config, labeled, net_config=NET_CONFIG)
    assert net.config == NET_CONFIG
    assert len(history) == 2


def test_logged_learning_rate_follows_schedule(labeled):
    trainer = make_trainer(labeled, method="none", epochs=2, iterations_per_epoch=4, augment=False).fit()
    T = trainer.total_iterations
    assert T == 8
    lrs = dict(zip(trainer.history["iter"], trainer.history["lr"]))
    for t in (0, T // 4, T // 2, T - 1):
        assert abs(lrs[t] - 0.02 * (1 - t / T) ** 0.9) < 1e-12
