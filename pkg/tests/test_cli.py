import csv
import math
import subprocess
import sys

import pytest

from miaprune import cli
from miaprune.checkpoint import load_checkpoint
from miaprune.csvio import RUN_FIELDS, read_csv

TINY = """
epochs = 2
pretrain_epochs = 2
admm_epochs = 1
hidden = 8
keep_grid = 1.0, 0.2
eval_attacker_epochs = 2
synth_members = 40
synth_nonmembers = 40
synth_holdout = 40
synth_dim = 5
synth_classes = 3
theorem_ns = 4, 8
theorem_trials = 10
neuron_seeds = 3
network_seeds = 2
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return str(p)


def test_theorem_twice_is_identical(cfg, tmp_path):
    for d in ("a", "b"):
        assert cli.main(["theorem", "--config", cfg, "--seed", "7", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "theorem.csv").read_bytes()
    assert a == (tmp_path / "b" / "theorem.csv").read_bytes()
    rows = list(csv.DictReader(a.decode().splitlines()))
    assert [r["experiment"] for r in rows] == ["subset_sum", "subset_sum", "relu_neuron", "network"]


def test_train_then_attack_pipeline(cfg, tmp_path):
    out = str(tmp_path / "o")
    assert cli.main(["train", "--config", cfg, "--out", out]) == 0
    assert cli.main(["attack", "--config", cfg, "--out", out, "--checkpoint", f"{out}/model.miap"]) == 0
    row = list(csv.DictReader(open(f"{out}/attack.csv")))[0]
    assert math.isfinite(float(row["gain"])) and 0.0 <= float(row["attack_accuracy"]) <= 1.0
    assert load_checkpoint(f"{out}/attacker.miap").kind == "attack"


def test_report_reproduces_min_gain_selection(cfg, tmp_path):
    out = str(tmp_path / "o")
    assert cli.main(["train", "--config", cfg, "--out", out]) == 0
    assert cli.main(["report", "--out", out]) == 0
    raw = read_csv(f"{out}/runs.csv", RUN_FIELDS)
    expect = min((r for r in raw if r["status"] == "ok"), key=lambda r: (float(r["gain"]), int(r["kept"])))
    summary = list(csv.DictReader(open(f"{out}/summary.csv")))
    selected = [r for r in summary if r["row"] == "selected"]
    assert len(selected) == 1 and selected[0]["spec"] == expect["spec"]
    assert [r for r in raw if r["chosen"] == "1"][0]["spec"] == expect["spec"]


def test_minmax_defaults_gamma_to_one(cfg, tmp_path, monkeypatch):
    seen = {}
    real = cli.grid_search

    def spy(tc, data):
        seen["gamma"] = tc.gamma
        return real(tc, data)

    monkeypatch.setattr(cli, "grid_search", spy)
    assert cli.main(["minmax", "--config", cfg, "--out", str(tmp_path / "m")]) == 0
    assert seen["gamma"] == 1.0


def test_prune_checkpoint(cfg, tmp_path):
    out = str(tmp_path / "o")
    assert cli.main(["train", "--config", cfg, "--out", out]) == 0
    assert cli.main(["prune", "--config", cfg, "--out", out, "--checkpoint", f"{out}/grid0.miap"]) == 0
    rows = list(csv.DictReader(open(f"{out}/sparsity.csv")))
    assert rows[-1]["layer"] == "all" and float(rows[-1]["reduction_ratio"]) > 1.0


def test_identical_runs_give_identical_checkpoints(cfg, tmp_path):
    for d in ("a", "b"):
        assert cli.main(["train", "--config", cfg, "--seed", "11", "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "model.miap").read_bytes() == (tmp_path / "b" / "model.miap").read_bytes()


@pytest.mark.parametrize("argv", [[], ["bogus"], ["train", "--profile", "lab"], ["train", "--nope"]])
def test_usage_errors_exit_one(argv, capsys):
    assert cli.main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_config_error_exits_one(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("unknown_key = 1\n")
    assert cli.main(["train", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert cli.main(["attack", "--out", str(tmp_path)]) == 1


def test_runtime_error_exits_two(tmp_path):
    bad = tmp_path / "x.miap"
    bad.write_bytes(b"JUNKJUNK")
    assert cli.main(["attack", "--checkpoint", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["report", "--out", str(tmp_path / "empty")]) == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "miaprune.cli", "bogus"], capture_output=True, text=True)
    assert r.returncode == 1
