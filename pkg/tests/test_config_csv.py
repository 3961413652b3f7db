import math

import pytest

from miaprune import csvio
from miaprune.config import ExperimentConfig, dump_config, load_config, parse_config
from miaprune.errors import ConfigError, FormatError


def test_parse_basic_and_comments():
    cfg = parse_config("""
        # comment line
        seed = 7          # trailing comment
        profile = paper
        hidden = 32, 16
        keep_grid = 1.0, 0.1, 0.6/0.2/0.1
        first_layer_floor = none
        attacker_iterations = auto
    """)
    assert cfg.seed == 7 and cfg.profile == "paper"
    tc = cfg.train_config()
    assert tc.hidden == (32, 16) and tc.epochs == 300 and tc.first_layer_floor is None
    assert tc.keep_grid == [1.0, 0.1, [0.6, 0.2, 0.1]]
    assert tc.attacker_iterations is None and tc.seed == 7


def test_explicit_keys_override_profile():
    tc = parse_config("profile = paper\nepochs = 3\n").train_config()
    assert tc.epochs == 3 and tc.pretrain_epochs == 200


def test_desk_is_default():
    tc = ExperimentConfig().train_config()
    assert (tc.pretrain_epochs, tc.epochs) == (20, 30)


@pytest.mark.parametrize("text", [
    "bogus = 1", "seed = x", "seed = 1\nseed = 2", "profile = huge", "no equals sign",
    "gamma = -1", "batch_size = 0", "keep_grid = ", "dataset = mnist",
])
def test_rejections(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_mnist_paths_resolved_relative_to_file(tmp_path):
    for name in ("a", "b", "c", "d"):
        (tmp_path / name).write_bytes(b"")
    p = tmp_path / "c.cfg"
    p.write_text("dataset = mnist\nmnist_train_images = a\nmnist_train_labels = b\n"
                 "mnist_test_images = c\nmnist_test_labels = d\n")
    cfg = load_config(p)
    assert cfg.mnist_train_images == str((tmp_path / "a").resolve())


def test_missing_mnist_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("dataset = mnist\nmnist_train_images = nope\nmnist_train_labels = nope\n"
                 "mnist_test_images = nope\nmnist_test_labels = nope\n")
    with pytest.raises(ConfigError, match="no such file"):
        load_config(p)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_overrides_validate_seed_and_profile():
    cfg = ExperimentConfig()
    assert cfg.with_overrides(seed=2 ** 64 - 1).seed == 2 ** 64 - 1
    with pytest.raises(ConfigError):
        cfg.with_overrides(seed=-1)
    with pytest.raises(ConfigError):
        cfg.with_overrides(profile="lab")


def test_dump_round_trip():
    cfg = parse_config("seed = 3\nhidden = 8\nkeep_grid = 1.0, 0.5/0.25\ntheorem_ns = 4, 8\ngamma = 0.5\n")
    again = parse_config(dump_config(cfg))
    assert again == cfg


def test_csv_round_trip_is_lossless(tmp_path):
    rows = [{"experiment": "subset_sum", "n": 32, "eps": 0.05, "delta": 0.01, "trials": 1000,
             "success_rate": 0.1 + 0.2, "median_error": float("nan")},
            {"experiment": 'quote "me", please', "n": 4, "eps": 1e-300, "delta": 0.0, "trials": 1,
             "success_rate": 1.0, "median_error": 5e-324}]
    path = tmp_path / "t.csv"
    csvio.write_csv(path, csvio.THEOREM_FIELDS, rows)
    back = csvio.read_csv(path, csvio.THEOREM_FIELDS)
    assert back[0]["success_rate"] == repr(0.1 + 0.2) and float(back[0]["success_rate"]) == 0.1 + 0.2
    assert math.isnan(float(back[0]["median_error"]))
    assert back[1]["experiment"] == 'quote "me", please' and float(back[1]["median_error"]) == 5e-324


def test_csv_header_mismatch(tmp_path):
    path = tmp_path / "t.csv"
    csvio.write_csv(path, ("a", "b"), [{"a": 1, "b": 2}])
    with pytest.raises(FormatError):
        csvio.read_csv(path, ("a", "c"))


def test_csv_rejects_unknown_columns(tmp_path):
    with pytest.raises(ValueError):
        csvio.write_csv(tmp_path / "t.csv", ("a",), [{"a": 1, "zzz": 2}])


def _run_row(i, spec, gain, kept, status="ok"):
    return {"grid_point": str(i), "spec": spec, "status": status, "error": "", "kept": str(kept), "total": "100",
            "reduction_ratio": repr(100 / kept), "chosen": "0", "gain": repr(gain) if status == "ok" else "",
            "attack_accuracy": "0.6", "js_estimate": "0.01", "accuracy_gap": repr(0.3 - i / 10),
            "train_accuracy": "0.9", "test_accuracy": "0.7", "per_class_gap": ""}


def test_summary_selects_min_gain_and_sorts_by_gap():
    rows = [_run_row(0, "1", -1.30, 100), _run_row(1, "0.5", -1.35, 50), _run_row(2, "0.1", -1.35, 10),
            _run_row(3, "0.05", -9.0, 5, status="failed")]
    out = csvio.summarize_runs(rows)
    assert [r["row"] for r in out] == ["run", "run", "run", "selected"]
    assert [r["spec"] for r in out[:3]] == ["0.1", "0.5", "1"]
    assert out[-1]["spec"] == "0.1"
