import pandas as pd
import pytest

from routeseg.autodiff import GradCheckResult
from routeseg.data import load_dataset, read_split
from routeseg.experiment import main
from routeseg.seeding import SEED_ENV_VAR

TOY_CONFIG = """\
# one tiny supervised epoch
method=none
epochs=1
iterations_per_epoch=2
batch_labeled=1
num_layers=1
base_channels=2
num_classes=3
num_permutations=4
"""


def all_bytes(root):
    return {path.relative_to(root): path.read_bytes() for path in sorted(root.rglob("*")) if path.is_file()}


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "shapes"
    assert main(["gen-data", "--out", str(root), "--count", "4", "--classes", "3", "--seed", "7"]) == 0
    return root


@pytest.fixture
def config(tmp_path, data_dir):
    path = tmp_path / "run.cfg"
    path.write_text(TOY_CONFIG + f"data_dir={data_dir}\n")
    return path


def test_gen_data_is_reproducible(tmp_path):
    args = ["gen-data", "--count", "8", "--classes", "3", "--seed", "7", "--fraction", "1/4"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    first = all_bytes(tmp_path / "a")
    assert first == all_bytes(tmp_path / "b")
    assert len(load_dataset(tmp_path / "a")) == 8
    split = read_split(tmp_path / "a" / "split_1-4_7.txt")
    assert len(split.labeled) == 2 and len(split.unlabeled) == 6


def test_gen_data_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "3")
    for name in ("a", "b"):
        assert main(["gen-data", "--out", str(tmp_path / name), "--count", "2", "--classes", "3"]) == 0
    assert all_bytes(tmp_path / "a") == all_bytes(tmp_path / "b")


def test_gen_data_rejects_bad_arguments(tmp_path):
    out = tmp_path / "out"
    assert main(["gen-data", "--out", str(out), "--classes", "1", "--seed", "0"]) == 1
    assert main(["gen-data", "--out", str(out), "--count", "four"]) == 1
    assert not out.exists()


def test_usage_error():
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_train_then_eval(tmp_path, config, data_dir, capsys):
    out = tmp_path / "out"
    assert main(["train", str(config), "--out", str(out), "--seed", "1", "--threads", "1"]) == 0
    metrics = pd.read_csv(out / "metrics.csv")
    assert list(metrics["iter"]) == [0, 1]
    checkpoint = out / "checkpoints" / "last.seln"
    assert checkpoint.exists()

    capsys.readouterr()
    assert main(["eval", str(checkpoint), str(data_dir), "--out", str(out)]) == 0
    assert "miou=" in capsys.readouterr().out
    assert main(["eval", str(checkpoint), str(data_dir), "--out", str(out)]) == 0
    evals = pd.read_csv(out / "eval.csv")
    assert list(evals.columns) == ["checkpoint", "data_dir", "miou", "pixel_accuracy"]
    assert len(evals) == 2
    assert evals["miou"].iloc[0] == evals["miou"].iloc[1]


def test_training_is_byte_reproducible(tmp_path, config):
    for name in ("a", "b"):
        assert main(["train", str(config), "--out", str(tmp_path / name), "--seed", "5", "--threads", "1"]) == 0
    for relative in ("metrics.csv", "checkpoints/last.seln", "checkpoints/epoch_1.seln"):
        assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()


def test_train_with_overrides_and_resume(tmp_path, config):
    out = tmp_path / "out"
    args = ["train", str(config), "--seed", "2", "--set", "method=mean_teacher", "--set", "fraction=1/2"]
    assert main(args + ["--out", str(out), "--set", "epochs=2"]) == 0
    metrics = pd.read_csv(out / "metrics.csv")
    assert metrics["loss_ssup"].notna().all()
    assert list(metrics["epoch"]) == [0, 0, 1, 1]

    resumed = tmp_path / "resumed"
    checkpoint = out / "checkpoints" / "epoch_1.seln"
    assert main(args + ["--out", str(resumed), "--set", "epochs=2", "--resume", str(checkpoint)]) == 0
    assert list(pd.read_csv(resumed / "metrics.csv")["iter"]) == [2, 3]

    assert main(args + ["--out", str(out), "--set", "epochs=2", "--resume", str(checkpoint)]) == 0
    assert list(pd.read_csv(out / "metrics.csv")["iter"]) == [0, 1, 2, 3]


def test_train_config_errors_leave_no_output(tmp_path, config):
    out = tmp_path / "out"
    assert main(["train", str(config), "--out", str(out), "--set", "bogus=1"]) == 1
    assert main(["train", str(config), "--out", str(out), "--set", "data_dir=/nonexistent/data"]) == 1
    assert main(["train", str(config), "--out", str(out), "--resume", str(tmp_path / "none.seln")]) == 1
    assert not out.exists()


def test_unreadable_inputs_exit_with_error(tmp_path):
    broken = tmp_path / "broken.cfg"
    broken.write_text("method: [mean_teacher\nepochs: 1\n")
    out = tmp_path / "out"
    assert main(["train", str(broken), "--out", str(out)]) == 1
    assert main(["train", str(tmp_path), "--out", str(out)]) == 1
    assert not out.exists()

    taken = tmp_path / "taken"
    taken.write_text("")
    assert main(["gen-data", "--out", str(taken), "--count", "1", "--classes", "3", "--seed", "0"]) == 1
    assert taken.read_text() == ""


def test_eval_missing_checkpoint(tmp_path, data_dir):
    out = tmp_path / "out"
    assert main(["eval", str(tmp_path / "missing.seln"), str(data_dir), "--out", str(out)]) == 1
    assert not out.exists()


def test_flops_threshold_monotonicity(tmp_path, config):
    out = tmp_path / "out"
    assert main(["train", str(config), "--out", str(out), "--seed", "0"]) == 0
    checkpoint = str(out / "checkpoints" / "last.seln")
    args = ["flops", checkpoint, "--out", str(out), "--tau", "0", "--tau", "0.3", "--tau", "0.5"]
    assert main(args) == 0
    flops = pd.read_csv(out / "flops.csv")
    assert list(flops["tau"]) == [0.0, 0.3, 0.5]
    macs = list(flops["macs"])
    assert macs[0] >= macs[1] >= macs[2] > 0
    assert main(args) == 0
    assert list(pd.read_csv(out / "flops.csv")["macs"]) == macs
    assert main(["flops", checkpoint, "--out", str(out), "--shape", "1,3,50,50"]) == 1


def test_gradcheck_exit_status(tmp_path, monkeypatch):
    results = [
        GradCheckResult("conv2d", True, 1e-9, 1e-12, 10),
        GradCheckResult("broken", False, 0.5, 0.1, 10),
    ]
    monkeypatch.setattr("routeseg.experiment.cli.builtin_checks", lambda seed, rtol: results)
    assert main(["gradcheck", "--out", str(tmp_path)]) == 1
    report = pd.read_csv(tmp_path / "gradcheck.csv")
    assert list(report["passed"]) == [True, False]

    monkeypatch.setattr("routeseg.experiment.cli.builtin_checks", lambda seed, rtol: results[:1])
    assert main(["gradcheck", "--out", str(tmp_path)]) == 0
