import json
import subprocess

import pytest

from drift_extract import convert_loss_log


def rows(path):
    lines = path.read_text().splitlines()
    return lines[0], lines[1], [l.split(",") for l in lines[2:]]


def test_trainer_state_with_token_counters(tmp_path):
    src = tmp_path / "trainer_state.json"
    history = [
        {"step": 10, "epoch": 0.5, "loss": 3.2, "num_input_tokens_seen": 5120},
        {"step": 20, "epoch": 1.0, "loss": 2.9, "num_input_tokens_seen": 10240},
        {"step": 20, "epoch": 1.0, "eval_loss": 3.0},
        {"step": 20, "epoch": 1.0, "train_loss": 3.05, "train_runtime": 1.0},
    ]
    src.write_text(json.dumps({"log_history": history}))
    out = tmp_path / "loss.csv"
    assert convert_loss_log(src, out) == 2
    note, header, body = rows(out)
    assert note.startswith("#") and "source log" in note
    assert header == "step,epoch,tokens_seen,train_loss,eval_loss"
    assert body == [["10", "0.5", "5120", "3.2", ""], ["20", "1.0", "10240", "2.9", "3.0"]]


def test_steps_only_derives_tokens(tmp_path):
    src = tmp_path / "log.csv"
    src.write_text("step,epoch,loss\n1,0.1,4.0\n2,0.2,3.5\n")
    out = tmp_path / "loss.csv"
    convert_loss_log(src, out, batch_size=8, max_length=512)
    note, _, body = rows(out)
    assert "batch_size (8)" in note and "max_length (512)" in note
    assert [r[2] for r in body] == ["4096", "8192"]


def test_steps_only_without_shape_fails(tmp_path):
    src = tmp_path / "log.csv"
    src.write_text("step,epoch,loss\n1,0.1,4.0\n")
    with pytest.raises(ValueError, match="batch_size"):
        convert_loss_log(src, tmp_path / "loss.csv")


def test_empty_log_fails(tmp_path):
    src = tmp_path / "empty.json"
    src.write_text("")
    with pytest.raises(ValueError, match="empty"):
        convert_loss_log(src, tmp_path / "loss.csv")


def test_missing_columns_fail(tmp_path):
    src = tmp_path / "log.csv"
    src.write_text("step,epoch,accuracy\n1,0.1,0.5\n")
    with pytest.raises(ValueError, match="train loss"):
        convert_loss_log(src, tmp_path / "loss.csv", 1, 1)
    src.write_text("step,loss\n1,0.5\n")
    with pytest.raises(ValueError, match="epoch"):
        convert_loss_log(src, tmp_path / "loss.csv", 1, 1)


def test_output_loads_in_toolkit(tmp_path, drift_bin):
    src = tmp_path / "log.jsonl"
    src.write_text(
        "\n".join(json.dumps({"step": s, "epoch": s / 40, "loss": 2 + 10 * (s * 512) ** -0.4}) for s in range(1, 41))
    )
    out = tmp_path / "loss.csv"
    convert_loss_log(src, out, batch_size=4, max_length=128)
    features = tmp_path / "loss.json"
    subprocess.run([drift_bin, "loss", "--log", str(out), "--out", str(features)], check=True)
    fit = json.loads(features.read_text())["fit"]
    assert abs(fit["beta"] - 0.4) < 1e-3
