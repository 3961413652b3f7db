"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import admm, theorem
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import PROFILES, ExperimentConfig, load_config
from .csvio import (ATTACK_FIELDS, EPOCH_FIELDS, RUN_FIELDS, SPARSITY_FIELDS, SUMMARY_FIELDS, THEOREM_FIELDS,
                    epoch_rows, read_csv, run_rows, summarize_runs, write_csv)
from .data import load_mnist_idx, synth_overfit_toy
from .errors import ConfigError, MiapError
from .trainer import ExperimentData, evaluate_privacy, fit_eval_attacker, grid_search

log = logging.getLogger("miaprune")

COMMANDS = ("train", "minmax", "attack", "prune", "theorem", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="miaprune", description="Privacy-aware pruning experiments.")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat key = value config file")
        s.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
        s.add_argument("--profile", choices=PROFILES, help="default set (overrides the config)")
        s.add_argument("--out", help="output directory")
        if name in ("attack", "prune"):
            s.add_argument("--checkpoint", help="classifier checkpoint to operate on")
        if name == "report":
            s.add_argument("inputs", nargs="*", help="runs.csv files (default: OUT/runs.csv)")
    return p


def build_data(cfg: ExperimentConfig) -> ExperimentData:
    if cfg.dataset == "mnist":
        train = load_mnist_idx(cfg.mnist_train_images, cfg.mnist_train_labels)
        test = load_mnist_idx(cfg.mnist_test_images, cfg.mnist_test_labels)
        if cfg.mnist_train_limit:
            train = train.subset(np.arange(min(cfg.mnist_train_limit, len(train))))
        if cfg.mnist_test_limit:
            test = test.subset(np.arange(min(cfg.mnist_test_limit, len(test))))
        return ExperimentData.build(train, test, cfg.seed)
    parts = synth_overfit_toy(cfg.synth_members, cfg.synth_nonmembers, cfg.synth_dim, cfg.synth_classes,
                              cfg.seed, separation=cfg.synth_separation, label_noise=cfg.synth_label_noise,
                              n_holdout=cfg.synth_holdout)
    return ExperimentData.build(parts[0], parts[1], cfg.seed, parts[2] if len(parts) > 2 else None)


def _train(cfg: ExperimentConfig, out: Path, minmax: bool) -> int:
    tc = cfg.train_config()
    if minmax and tc.gamma == 0:
        tc = cfg.train_config(gamma=1.0)
    data = build_data(cfg)
    result = grid_search(tc, data)
    write_csv(out / "epochs.csv", EPOCH_FIELDS, epoch_rows(result))
    write_csv(out / "runs.csv", RUN_FIELDS, run_rows(result))
    for i, rec in enumerate(result.records):
        if rec.net is not None:
            save_checkpoint(out / f"grid{i}.miap",
                            Checkpoint.of_classifier(rec.net, cfg.seed, rec.admm_state, spec=rec.spec_label))
    best = result.best
    save_checkpoint(out / "model.miap", Checkpoint.of_classifier(best.net, cfg.seed, best.admm_state,
                                                                 spec=best.spec_label))
    print(f"chosen spec {best.spec_label}: gain {best.final.gain:.4f}, "
          f"attack accuracy {best.final.attack_accuracy:.4f}, reduction {best.sparsity.ratio:.2f}x")
    return 0


def _checkpoint_path(args, cfg: ExperimentConfig) -> Path:
    path = args.checkpoint or cfg.checkpoint
    if not path:
        raise ConfigError("no checkpoint given (--checkpoint or config key 'checkpoint')")
    return Path(path)


def _attack(cfg: ExperimentConfig, out: Path, ck_path: Path) -> int:
    ck = load_checkpoint(ck_path)
    if ck.kind != "classifier":
        raise ConfigError(f"{ck_path} is not a classifier checkpoint")
    tc = cfg.train_config()
    data = build_data(cfg)
    if ck.net.input_dim != data.train.dim or ck.net.output_dim != data.classes:
        raise ConfigError("checkpoint shape does not match the configured dataset")
    fa = fit_eval_attacker(ck.net, data, tc)
    report = evaluate_privacy(ck.net, data, tc, fa)
    row = dict(report.to_row(), checkpoint=str(ck_path))
    write_csv(out / "attack.csv", ATTACK_FIELDS, [row])
    save_checkpoint(out / "attacker.miap", Checkpoint.of_attacker(fa, cfg.seed))
    print(f"gain {report.gain:.4f}, attack accuracy {report.attack_accuracy:.4f}")
    return 0


def _prune(cfg: ExperimentConfig, out: Path, ck_path: Path) -> int:
    ck = load_checkpoint(ck_path)
    if ck.kind != "classifier":
        raise ConfigError(f"{ck_path} is not a classifier checkpoint")
    if len(cfg.prune_keep) != 1:
        raise ConfigError("prune_keep takes a single entry")
    tc = cfg.train_config()
    spec = tc.spec_for(cfg.prune_keep[0], len(ck.net.dense_layers()))
    admm.hard_prune(ck.net, spec)
    save_checkpoint(out / "pruned.miap", Checkpoint.of_classifier(ck.net, ck.seed, None, spec=spec.label()))
    rep = admm.sparsity_report(ck.net)
    rows = [{"layer": i, "kept": k, "total": t, "reduction_ratio": float(t / k)}
            for i, (k, t) in enumerate(zip(rep.kept, rep.total))]
    rows.append({"layer": "all", "kept": rep.total_kept, "total": rep.total_weights,
                 "reduction_ratio": float(rep.ratio)})
    write_csv(out / "sparsity.csv", SPARSITY_FIELDS, rows)
    print(f"kept {rep.total_kept} of {rep.total_weights} weights ({rep.ratio:.2f}x)")
    return 0


def theorem_rows(cfg: ExperimentConfig):
    rows = []
    for n in cfg.theorem_ns:
        r = theorem.theorem2_trial(n, cfg.theorem_eps, cfg.theorem_trials, cfg.seed,
                                   cfg.theorem_grid_step, with_errors=cfg.theorem_errors)
        rows.append({"experiment": "subset_sum", "n": n, "eps": cfg.theorem_eps, "delta": cfg.theorem_delta,
                     "trials": r.trials, "success_rate": r.success_rate, "median_error": r.median_error})
    reps = [theorem.prune_relu_neuron(cfg.neuron_target, cfg.neuron_width, cfg.neuron_eps, cfg.seed + s)
            for s in range(cfg.neuron_seeds)]
    rows.append({"experiment": "relu_neuron", "n": cfg.neuron_width, "eps": cfg.neuron_eps,
                 "delta": cfg.theorem_delta, "trials": len(reps),
                 "success_rate": float(np.mean([r.success for r in reps])),
                 "median_error": float(np.median([r.error for r in reps]))})
    reps = []
    for s in range(cfg.network_seeds):
        target = theorem.random_target(2, cfg.network_width, 2, 2, cfg.seed + s)
        reps.append(theorem.prune_network_approx(target, cfg.network_eps, cfg.seed + s, grid_points=41))
    rows.append({"experiment": "network", "n": reps[0].width if reps else 0, "eps": cfg.network_eps,
                 "delta": cfg.theorem_delta, "trials": len(reps),
                 "success_rate": float(np.mean([r.success for r in reps])) if reps else float("nan"),
                 "median_error": float(np.median([r.error for r in reps])) if reps else float("nan")})
    return rows


def _report(out: Path, inputs) -> int:
    paths = [Path(p) for p in inputs] or [out / "runs.csv"]
    rows = []
    for p in paths:
        rows += summarize_runs(read_csv(p, RUN_FIELDS), str(p))
    write_csv(out / "summary.csv", SUMMARY_FIELDS, rows)
    print(f"{'row':9}{'spec':22}{'gain':>9}{'attack':>9}{'gap':>9}{'test':>9}{'ratio':>9}")
    for r in rows:
        print(f"{r['row']:9}{r['spec']:22}{r['gain']:9.4f}{r['attack_accuracy']:9.4f}"
              f"{r['accuracy_gap']:9.4f}{r['test_accuracy']:9.4f}{r['reduction_ratio']:9.2f}")
    return 0


def dispatch(argv) -> int:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError(build_parser().format_usage() + "miaprune: error: a subcommand is required")
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = cfg.with_overrides(args.seed, args.profile, args.out)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command in ("train", "minmax"):
        return _train(cfg, out, args.command == "minmax")
    if args.command == "attack":
        return _attack(cfg, out, _checkpoint_path(args, cfg))
    if args.command == "prune":
        return _prune(cfg, out, _checkpoint_path(args, cfg))
    if args.command == "theorem":
        write_csv(out / "theorem.csv", THEOREM_FIELDS, theorem_rows(cfg))
        return 0
    return _report(out, args.inputs)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(sys.argv[1:] if argv is None else argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (MiapError, OSError, ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
