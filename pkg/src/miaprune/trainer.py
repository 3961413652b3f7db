"""The alternating attacker / defender training loop with ADMM pruning, and
the grid search over per-layer keep ratios.

Each run goes through three stages: dense pretraining, an ADMM warm phase
in which the weights are pulled towards their cardinality projection, and
masked training after a hard prune.  ``gamma = 0`` gives plain pruning;
``gamma > 0`` adds the attacker's gain to the defender's loss.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from . import admm as admm_mod
from .admm import ADMMState, PruneSpec, SparsityReport
from .attack import (AttackModel, MembershipSplit, accuracy_from_scores, attack_scores,
                     build_attack_model, gain_and_input_grads, train_attack, train_attack_epochs)
from .data import Dataset, full_split, membership_split
from .errors import ConfigError, MiapError, NumericError
from .metrics import GainReport, accuracy_gap, empirical_gain, histogram_outputs, js_divergence
from .nn import Network, OptimizerState, accuracy, cross_entropy, mlp, optimizer_step
from .rng import stream

log = logging.getLogger(__name__)

KeepEntry = Union[float, Sequence[float]]


@dataclass
class TrainConfig:
    hidden: Sequence[int] = (64, 64)
    epochs: int = 30
    pretrain_epochs: int = 20
    admm_epochs: int = 10
    batch_size: int = 64
    optimizer: str = "adam"
    lr: float = 1e-3
    gamma: float = 0.0
    keep_grid: List[KeepEntry] = field(default_factory=lambda: [1.0, 0.5, 0.2, 0.1, 0.05])
    first_layer_floor: Optional[float] = 0.6
    admm_lambda: float = 1e-2
    prune_mode: str = "warm"
    attacker_iterations: Optional[int] = None
    attacker_batch: int = 64
    attacker_lr: float = 1e-3
    eval_attacker_epochs: int = 100
    eval_attacker_lr: float = 1e-3
    hist_bins: int = 32
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if not self.keep_grid:
            raise ConfigError("keep grid must not be empty")
        if self.batch_size < 1 or self.attacker_batch < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.epochs < 0 or self.pretrain_epochs < 0 or self.admm_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.prune_mode not in ("warm", "per_epoch"):
            raise ConfigError(f"unknown prune mode {self.prune_mode!r}")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        return cls(**kw)

    @classmethod
    def paper(cls, **kw) -> "TrainConfig":
        base = dict(epochs=300, pretrain_epochs=200, admm_epochs=100, lr=0.05,
                    attacker_lr=1e-5, eval_attacker_epochs=100, eval_attacker_lr=1e-5)
        base.update(kw)
        return cls(**base)

    def spec_for(self, entry: KeepEntry, layers: int) -> PruneSpec:
        if np.isscalar(entry):
            return PruneSpec.uniform(float(entry), layers, self.first_layer_floor)
        return PruneSpec(keep_ratios=list(entry))


@dataclass
class ExperimentData:
    train: Dataset
    test: Dataset
    in_loop: MembershipSplit
    final_eval: MembershipSplit
    holdout: Optional[Dataset] = None

    @classmethod
    def build(cls, train: Dataset, test: Dataset, seed: int, holdout: Optional[Dataset] = None):
        in_loop, final_eval = membership_split(train, test, seed)
        return cls(train, test, in_loop, final_eval, holdout)

    @property
    def classes(self) -> int:
        return self.train.classes


@dataclass
class EpochMetrics:
    epoch: int
    phase: str
    loss: float
    gain: float
    attack_accuracy: float
    kept_fraction: float
    accuracy_gap: float
    primal_residual: float
    defender_overlap: int = 0

    FIELDS = ("epoch", "phase", "loss", "gain", "attack_accuracy", "kept_fraction",
              "accuracy_gap", "primal_residual", "defender_overlap")


@dataclass
class RunRecord:
    spec_label: str
    epochs: List[EpochMetrics] = field(default_factory=list)
    final: Optional[GainReport] = None
    sparsity: Optional[SparsityReport] = None
    status: str = "ok"
    error: str = ""
    net: Optional[Network] = None
    admm_state: Optional[ADMMState] = None


def minmax_objective(net: Network, fa: Optional[AttackModel], batch, gamma: float, nonmember_batch=None):
    """Loss CE + gamma * gain(fa) and its parameter gradients.

    ``batch`` is ``(x, y)`` of members; the gain term pairs it with
    ``nonmember_batch`` and reaches the classifier through f(x).  The
    attacker is held fixed.  With ``gamma == 0`` (or no attacker) this is
    exactly the plain cross-entropy step.
    """
    if gamma < 0:
        raise ConfigError("gamma must be non-negative")
    x, y = batch
    if gamma == 0 or fa is None:
        probs = net.forward(x)
        loss = cross_entropy(probs, y)
        return loss, net.backward(y)
    if nonmember_batch is None:
        raise ConfigError("min-max objective needs a non-member batch")
    xn, yn = nonmember_batch
    y = np.asarray(y, dtype=np.int64)
    bm = len(y)
    probs = net.forward(np.concatenate([x, xn], axis=0))
    pm, pn = probs[:bm], probs[bm:]
    ce = cross_entropy(pm, y)
    gain, dpm, dpn = gain_and_input_grads(fa, pm, y, pn, yn)
    dlogits = np.zeros_like(probs)
    dlogits[:bm] = pm
    dlogits[np.arange(bm), y] -= 1.0
    dlogits[:bm] /= bm
    g = gamma * np.concatenate([dpm, dpn], axis=0)
    dlogits += probs * (g - np.sum(g * probs, axis=1, keepdims=True))
    h = dlogits
    for layer in reversed(net.layers[:-1]):
        h = layer.backward(h)
    return ce + gamma * gain, net.grads()


def _batches(rng, idx, batch_size):
    idx = rng.permutation(idx)
    for s in range(0, len(idx), batch_size):
        yield idx[s:s + batch_size]


def pretrain(net: Network, opt: OptimizerState, train: Dataset, epochs: int, batch_size: int, rng) -> List[float]:
    losses = []
    for _ in range(epochs):
        total, count = 0.0, 0
        for b in _batches(rng, np.arange(len(train)), batch_size):
            probs = net.forward(train.features[b])
            total += cross_entropy(probs, train.labels[b]) * len(b)
            count += len(b)
            optimizer_step(opt, net.params(), net.backward(train.labels[b]))
            net.apply_masks()
        losses.append(total / count)
    return losses


class Run:
    """Mutable state of one training run (one grid point, one seed)."""

    def __init__(self, config: TrainConfig, data: ExperimentData, spec: Optional[PruneSpec]):
        self.config = config
        self.data = data
        self.spec = spec
        seed = config.seed
        dims = [data.train.dim, *config.hidden, data.classes]
        self.net = mlp(dims, stream(seed, "init"))
        self.opt = OptimizerState(config.optimizer, config.lr)
        self.batch_rng = stream(seed, "batching")
        self.attacker_rng = stream(seed, "attacker")
        self.fa = build_attack_model(data.classes, stream(seed, "attacker_init")) if config.gamma > 0 else None
        self.admm_state: Optional[ADMMState] = None
        self.pruned = False
        self.epoch = 0

    def attacker_iterations(self) -> int:
        if self.config.attacker_iterations is not None:
            return self.config.attacker_iterations
        return max(1, math.ceil(len(self.data.in_loop.member_y) / self.config.attacker_batch))

    def phase(self, epoch: int) -> str:
        if self.spec is None:
            return "dense"
        if self.config.prune_mode == "per_epoch":
            return "admm+prune"
        return "admm" if epoch < self.config.admm_epochs else "prune"


def train_epoch(run: Run) -> EpochMetrics:
    """One Algorithm-1 epoch: attacker loop, defender pass, ADMM/prune update."""
    cfg, data, net = run.config, run.data, run.net
    phase = run.phase(run.epoch)
    if phase in ("admm", "admm+prune") and run.admm_state is None:
        run.admm_state = admm_mod.init_admm(net, run.spec, cfg.admm_lambda)
    if phase == "prune" and not run.pruned:
        admm_mod.hard_prune(net, run.spec)
        run.pruned = True
    admm_active = phase in ("admm", "admm+prune")

    excluded = np.array([], dtype=np.int64)
    if run.fa is not None:
        hist = train_attack(run.fa, net, data.in_loop, run.attacker_iterations(), cfg.attacker_batch,
                            cfg.attacker_lr, run.attacker_rng, keep_batches=True)
        excluded = data.in_loop.member_idx[hist.member_batches[-1]]

    pool = np.setdiff1d(np.arange(len(data.train)), excluded)
    total, count, overlap = 0.0, 0, 0
    for b in _batches(run.batch_rng, pool, cfg.batch_size):
        overlap += int(np.intersect1d(b, excluded).size)
        nonmember = None
        if run.fa is not None:
            nb = run.batch_rng.choice(len(data.in_loop.nonmember_y), size=min(len(b), len(data.in_loop.nonmember_y)),
                                      replace=False)
            nonmember = (data.in_loop.nonmember_x[nb], data.in_loop.nonmember_y[nb])
        try:
            loss = admm_mod.admm_w_step(net, (data.train.features[b], data.train.labels[b]), run.fa, cfg.gamma,
                                        run.admm_state if admm_active else None, run.opt, nonmember)
        except NumericError as exc:
            raise NumericError(f"epoch {run.epoch}: {exc}") from exc
        total += loss * len(b)
        count += len(b)

    residual = float("nan")
    if admm_active:
        admm_mod.admm_z_step(run.admm_state, net)
        admm_mod.admm_u_step(run.admm_state, net)
        residual = run.admm_state.residuals[-1]
    if phase == "admm+prune":
        admm_mod.hard_prune(net, run.spec)
        run.pruned = True
    elif run.pruned:
        net.apply_masks()

    gain = att = float("nan")
    if run.fa is not None:
        sm, sn = attack_scores(run.fa, net, data.in_loop)
        gain, att = empirical_gain(sm, sn), accuracy_from_scores(sm, sn)
    sp = admm_mod.sparsity_report(net) if run.pruned else None
    kept = (sp.total_kept / sp.total_weights) if sp else 1.0
    gap = accuracy(net, data.train.features, data.train.labels) - accuracy(net, data.test.features, data.test.labels)
    m = EpochMetrics(run.epoch, phase, total / max(count, 1), gain, att, kept, gap, residual, overlap)
    run.epoch += 1
    return m


def fit_eval_attacker(net: Network, data: ExperimentData, config: TrainConfig) -> AttackModel:
    """Fresh attacker trained on the final-eval split only."""
    fa = build_attack_model(data.classes, stream(config.seed, "eval_attacker_init"))
    train_attack_epochs(fa, net, data.final_eval, config.eval_attacker_epochs, config.attacker_batch,
                        config.eval_attacker_lr, stream(config.seed, "eval_attacker"))
    return fa


def evaluate_privacy(net: Network, data: ExperimentData, config: TrainConfig,
                     fa: Optional[AttackModel] = None) -> GainReport:
    """Post-hoc attack: a fresh attacker trained on the final-eval split and
    scored on the in-loop split, plus JS and accuracy-gap diagnostics."""
    if fa is None:
        fa = fit_eval_attacker(net, data, config)
    sm, sn = attack_scores(fa, net, data.in_loop)
    whole = full_split(data.train, data.test)
    train_acc, test_acc, gap, per_class = accuracy_gap(net, whole, data.classes)
    if data.holdout is not None:
        test_acc = accuracy(net, data.holdout.features, data.holdout.labels)
    hist = histogram_outputs(net.forward(data.train.features), data.train.labels,
                             net.forward(data.test.features), data.test.labels, bins=config.hist_bins)
    js = js_divergence(*hist.masses())
    return GainReport(empirical_gain(sm, sn), accuracy_from_scores(sm, sn), js, gap, per_class,
                      train_acc, test_acc)


def run_single(config: TrainConfig, data: ExperimentData, spec: Optional[PruneSpec],
               evaluate: bool = True) -> RunRecord:
    run = Run(config, data, spec)
    pretrain(run.net, run.opt, data.train, config.pretrain_epochs, config.batch_size, run.batch_rng)
    record = RunRecord(spec.label() if spec else "dense")
    for _ in range(config.epochs):
        record.epochs.append(train_epoch(run))
    if spec is not None and not run.pruned:
        admm_mod.hard_prune(run.net, spec)
        run.pruned = True
    record.sparsity = admm_mod.sparsity_report(run.net)
    record.net = run.net
    record.admm_state = run.admm_state
    if evaluate:
        record.final = evaluate_privacy(run.net, data, config)
    return record


@dataclass
class GridResult:
    records: List[RunRecord]
    chosen: int

    @property
    def best(self) -> RunRecord:
        return self.records[self.chosen]


def select_spec(records: Sequence[RunRecord]) -> int:
    """Index of the minimum final gain; ties go to the sparser model."""
    best, key = -1, None
    for i, r in enumerate(records):
        if r.status != "ok" or r.final is None:
            continue
        k = (r.final.gain, r.sparsity.total_kept if r.sparsity else math.inf)
        if key is None or k < key:
            best, key = i, k
    return best


def grid_search(config: TrainConfig, data: ExperimentData) -> GridResult:
    """Run the full loop for every keep-ratio entry and keep the min-gain model."""
    layers = len(config.hidden) + 1
    records = []
    for entry in config.keep_grid:
        spec = config.spec_for(entry, layers)
        try:
            records.append(run_single(config, data, spec))
        except MiapError as exc:
            log.warning("grid point %s failed: %s", spec.label(), exc)
            records.append(RunRecord(spec.label(), status="failed", error=str(exc)))
    chosen = select_spec(records)
    if chosen < 0:
        raise NumericError("every grid point failed")
    return GridResult(records, chosen)


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
