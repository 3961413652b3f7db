"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored.  Unknown keys, duplicate keys
and unparsable values raise :class:`ConfigError`.  ``profile`` selects the
desk or paper defaults for training; any key given explicitly wins.  Input
paths are resolved relative to the config file and must exist when the
chosen dataset needs them.

List syntax: ``hidden = 64, 64``.  A keep grid entry is either one ratio
(applied to every layer, with the first-layer floor) or a per-layer vector
written with slashes: ``keep_grid = 1.0, 0.1, 0.6/0.1/0.1``.
"""
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

from .errors import ConfigError
from .trainer import TrainConfig

PROFILES = ("desk", "paper")


def _int(v: str) -> int:
    return int(v)


def _opt_int(v: str) -> Optional[int]:
    return None if v.lower() in ("auto", "none") else int(v)


def _opt_float(v: str) -> Optional[float]:
    return None if v.lower() == "none" else float(v)


def _ints(v: str) -> List[int]:
    return [int(x) for x in v.split(",") if x.strip()]


def _floats(v: str) -> List[float]:
    return [float(x) for x in v.split(",") if x.strip()]


def _grid(v: str):
    out = []
    for item in v.split(","):
        item = item.strip()
        if not item:
            continue
        out.append([float(x) for x in item.split("/")] if "/" in item else float(item))
    return out


def _choice(*options):
    def parse(v: str) -> str:
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


PARSERS = {
    "profile": _choice(*PROFILES),
    "seed": _int,
    "out": str,
    "dataset": _choice("synthetic", "mnist"),
    "mnist_train_images": str,
    "mnist_train_labels": str,
    "mnist_test_images": str,
    "mnist_test_labels": str,
    "mnist_train_limit": _int,
    "mnist_test_limit": _int,
    "synth_members": _int,
    "synth_nonmembers": _int,
    "synth_holdout": _int,
    "synth_dim": _int,
    "synth_classes": _int,
    "synth_separation": float,
    "synth_label_noise": float,
    # training (TrainConfig)
    "hidden": _ints,
    "epochs": _int,
    "pretrain_epochs": _int,
    "admm_epochs": _int,
    "batch_size": _int,
    "optimizer": _choice("sgd", "adam"),
    "lr": float,
    "gamma": float,
    "keep_grid": _grid,
    "first_layer_floor": _opt_float,
    "admm_lambda": float,
    "prune_mode": _choice("warm", "per_epoch"),
    "attacker_iterations": _opt_int,
    "attacker_batch": _int,
    "attacker_lr": float,
    "eval_attacker_epochs": _int,
    "eval_attacker_lr": float,
    "hist_bins": _int,
    # one-shot prune / attack on a checkpoint
    "checkpoint": str,
    "prune_keep": _grid,
    # theorem lab
    "theorem_ns": _ints,
    "theorem_eps": float,
    "theorem_delta": float,
    "theorem_trials": _int,
    "theorem_grid_step": float,
    "theorem_errors": _bool,
    "neuron_target": float,
    "neuron_width": _int,
    "neuron_eps": float,
    "neuron_seeds": _int,
    "network_eps": float,
    "network_width": _int,
    "network_seeds": _int,
}

TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
PATH_KEYS = ("mnist_train_images", "mnist_train_labels", "mnist_test_images", "mnist_test_labels")


@dataclass
class ExperimentConfig:
    profile: str = "desk"
    seed: int = 0
    out: str = "out"
    dataset: str = "synthetic"
    mnist_train_images: str = ""
    mnist_train_labels: str = ""
    mnist_test_images: str = ""
    mnist_test_labels: str = ""
    mnist_train_limit: int = 0
    mnist_test_limit: int = 0
    synth_members: int = 200
    synth_nonmembers: int = 200
    synth_holdout: int = 4000
    synth_dim: int = 20
    synth_classes: int = 4
    synth_separation: float = 2.0
    synth_label_noise: float = 0.0
    checkpoint: str = ""
    prune_keep: list = field(default_factory=lambda: [0.1])
    theorem_ns: List[int] = field(default_factory=lambda: [4, 8, 16, 32])
    theorem_eps: float = 0.05
    theorem_delta: float = 0.01
    theorem_trials: int = 200
    theorem_grid_step: float = 0.01
    theorem_errors: bool = True
    neuron_target: float = 0.37
    neuron_width: int = 64
    neuron_eps: float = 0.05
    neuron_seeds: int = 50
    network_eps: float = 0.3
    network_width: int = 2
    network_seeds: int = 20
    train_overrides: dict = field(default_factory=dict)

    def train_config(self, **kw) -> TrainConfig:
        base = TrainConfig.paper if self.profile == "paper" else TrainConfig.desk
        opts = dict(self.train_overrides, seed=self.seed)
        opts.update(kw)
        if "hidden" in opts:
            opts["hidden"] = tuple(opts["hidden"])
        try:
            return base(**opts)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def with_overrides(self, seed: Optional[int] = None, profile: Optional[str] = None,
                       out: Optional[str] = None) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            if seed < 0 or seed >= 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            kw["seed"] = seed
        if profile is not None:
            if profile not in PROFILES:
                raise ConfigError(f"unknown profile {profile!r}")
            kw["profile"] = profile
        if out is not None:
            kw["out"] = out
        return replace(self, **kw)


def parse_config(text: str, base_dir=None, source: str = "<config>") -> ExperimentConfig:
    values, seen = {}, set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            values[key] = PARSERS[key](value)
        except ValueError as e:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {e}") from None
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    for key in PATH_KEYS + ("checkpoint",):
        if values.get(key):
            values[key] = str((base / values[key]).resolve())
    train = {k: values.pop(k) for k in list(values) if k in TRAIN_KEYS}
    cfg = ExperimentConfig(**values, train_overrides=train)
    if cfg.dataset == "mnist":
        for key in PATH_KEYS:
            path = getattr(cfg, key)
            if not path:
                raise ConfigError(f"dataset = mnist needs {key}")
            if not Path(path).is_file():
                raise ConfigError(f"{key}: no such file {path}")
    cfg.train_config()  # surface invalid training settings at parse time
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text, path.parent, str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialise back to the flat format (round-trips through parse_config)."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (list, tuple)):
            return ", ".join("/".join(repr(float(x)) for x in e) if isinstance(e, (list, tuple)) else fmt(e)
                             for e in v)
        if isinstance(v, float):
            return repr(v)
        if v is None:
            return "none"
        return str(v)

    lines = []
    for f in fields(ExperimentConfig):
        if f.name == "train_overrides":
            continue
        lines.append(f"{f.name} = {fmt(getattr(cfg, f.name))}")
    for k, v in cfg.train_overrides.items():
        lines.append(f"{k} = {fmt(v)}")
    return "\n".join(lines) + "\n"
