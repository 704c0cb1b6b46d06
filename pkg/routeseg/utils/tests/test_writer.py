import logging

import pytest

from routeseg.utils.writers import DefaultWriter


def test_scalars_are_stored():
    writer = DefaultWriter("test", print_log=False)
    for step in range(3):
        writer.add_scalar("loss", 1.0 / (step + 1), step)
    writer.add_scalar("lr", 0.02)
    assert writer.read_tag_value("loss") == [1.0, 0.5, pytest.approx(1 / 3)]
    assert writer.read_tag_value("lr") == [0.02]

    data = writer.data
    assert list(data.columns) == ["name", "tag", "value", "global_step"]
    assert len(data) == 4
    assert set(data["name"]) == {"test"}
    assert data.loc[data["tag"] == "lr", "global_step"].isna().all()


def test_add_scalars_with_main_tag():
    writer = DefaultWriter("test", print_log=False)
    writer.add_scalars("train", dict(loss_sup=2.0, loss_ssup=0.5), global_step=4)
    writer.add_scalars(tag_scalar_dict=dict(miou_val=0.25), global_step=4)
    assert writer.read_tag_value("loss_sup", main_tag="train") == [2.0]
    assert writer.read_tag_value("train_loss_ssup") == [0.5]
    assert writer.read_tag_value("miou_val") == [0.25]


def test_maxlen_and_reset():
    writer = DefaultWriter("test", print_log=False, maxlen=2)
    for step in range(5):
        writer.add_scalar("loss", step, step)
    assert writer.read_tag_value("loss") == [3.0, 4.0]
    writer.reset()
    assert len(writer.data) == 0


@pytest.mark.parametrize("style", ["one_line", "multi_line"])
def test_console_logs(caplog, style):
    writer = DefaultWriter("test", style_log=style, log_interval=-1)
    with caplog.at_level(logging.INFO, logger="routeseg_logger"):
        writer.add_scalar("loss_total", 0.125, 7)
    assert "loss_total" in caplog.text
    assert "7" in caplog.text


def test_progressbar_style():
    writer = DefaultWriter("test", style_log="progressbar", log_interval=-1)
    writer.set_max_global_step(3)
    for step in range(3):
        writer.add_scalar("loss", 1.0, step)
    writer.close()
    assert writer.read_tag_value("loss") == [1.0, 1.0, 1.0]


def test_unknown_style():
    with pytest.raises(AssertionError):
        DefaultWriter("test", style_log="fancy")
