import csv

import pytest

from vtslip.cli import main


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth-gen", "--out", str(root), "--objects", "5", "--episodes-per-object", "4"]) == 0
    return root


def test_train_eval_predict(corpus, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", "--data", str(corpus), "--out", str(run), "--epochs", "1", "--val-objects", "1",
                 "--stride", "4"]) == 0
    assert (run / "checkpoint.bin").exists() and (run / "history.csv").exists()
    ev = tmp_path / "ev"
    assert main(["eval", "--checkpoint", str(run / "checkpoint.bin"), "--data", str(corpus), "--out", str(ev)]) == 0
    with open(ev / "metrics.csv") as fh:
        row = next(csv.DictReader(fh))
    assert row["variant"] == "fused" and 0.0 <= float(row["accuracy"]) <= 1.0
    capsys.readouterr()
    assert main(["predict", "--checkpoint", str(run / "checkpoint.bin"), "--data", str(corpus),
                 "--episode", "obj00_ep00"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8 and lines[0].split("\t")[1] in ("slip", "stable")
    assert main(["report", str(ev)]) == 0


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--configs", "8"]) == 0
    assert "8/8 passed" in capsys.readouterr().out


@pytest.mark.parametrize("argv, code, tag", [
    (["nonsense"], 2, "error: usage:"),
    (["train", "--data", "/nonexistent", "--out", "x"], 1, "error: data:"),
    (["experiment", "/nonexistent.ini", "--out", "x"], 2, "error: usage:"),
    (["train", "--data", "/nonexistent", "--out", "x", "--lr", "-1"], 1, "error: "),
])
def test_errors_are_machine_parseable(argv, code, tag, capsys):
    assert main(argv) == code
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith(tag)


def test_unknown_preset_from_cli(tmp_path, capsys):
    spec = tmp_path / "bad.ini"
    spec.write_text("[experiment]\npreset = everything\n")
    assert main(["experiment", str(spec), "--out", str(tmp_path / "r")]) == 2
    assert "seq_len_sweep" in capsys.readouterr().err
