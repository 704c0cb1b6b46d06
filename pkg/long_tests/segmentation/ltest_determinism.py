from routeseg.experiment import main

CONFIG = """\
method=full
strategy=co_teaching
epochs=2
batch_labeled=2
batch_unlabeled=2
fraction=1/8
"""


# two single-threaded runs of the same config give the same bytes
def test_cli_runs_are_byte_identical(tmp_path):
    data = tmp_path / "data"
    assert main(["gen-data", "--out", str(data), "--count", "32", "--seed", "7"]) == 0
    config = tmp_path / "run.cfg"
    config.write_text(CONFIG + f"data_dir={data}\n")
    for name in ("a", "b"):
        assert main(["train", str(config), "--out", str(tmp_path / name), "--seed", "3", "--threads", "1"]) == 0
    for relative in ("metrics.csv", "checkpoints/epoch_1.seln", "checkpoints/last.seln"):
        assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()
