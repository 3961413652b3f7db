"""Membership-inference attacker: a two-branch MLP over (f(x), one-hot y)
feeding a sigmoid head, trained by Adam to maximise the empirical gain."""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .metrics import CLAMP, empirical_gain
from .nn import Network, OptimizerState, ReLU, mlp, optimizer_step

PRED_DIMS = (1024, 512, 64)
LABEL_DIMS = (512, 64)
HEAD_DIMS = (64, 1)


@dataclass
class MembershipSplit:
    """Members D and non-members D' with the source indices they came from."""

    member_x: np.ndarray
    member_y: np.ndarray
    nonmember_x: np.ndarray
    nonmember_y: np.ndarray
    member_idx: np.ndarray
    nonmember_idx: np.ndarray
    member_source: str = "train"
    nonmember_source: str = "test"

    def __post_init__(self):
        if len(self.member_y) == 0 or len(self.nonmember_y) == 0:
            raise DataError("membership split needs non-empty D and D'")
        if self.member_source == self.nonmember_source:
            if np.intersect1d(self.member_idx, self.nonmember_idx).size:
                raise DataError("member and non-member index sets overlap")

    def __len__(self):
        return len(self.member_y) + len(self.nonmember_y)


class AttackModel:
    def __init__(self, branch_pred: Network, branch_label: Network, head: Network, k: int):
        if head.input_dim != branch_pred.output_dim + branch_label.output_dim:
            raise DimensionError("head input must equal the sum of branch outputs")
        if head.output_dim != 1:
            raise DimensionError("attack head must emit a single logit")
        self.branch_pred = branch_pred
        self.branch_label = branch_label
        self.head = head
        self.k = k
        self.opt: Optional[OptimizerState] = None

    def networks(self):
        return [self.branch_pred, self.branch_label, self.head]

    def params(self):
        return [p for net in self.networks() for p in net.params()]

    def grads(self):
        return [g for net in self.networks() for g in net.grads()]

    def logits(self, pred, y):
        pred = np.asarray(pred, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if pred.ndim != 2 or pred.shape[1] != self.k:
            raise DimensionError(f"expected predictions of shape (B, {self.k}), got {pred.shape}")
        if y.shape != (pred.shape[0],):
            raise DimensionError("one label per prediction row required")
        onehot = np.zeros((y.size, self.k))
        onehot[np.arange(y.size), y] = 1.0
        a = self.branch_pred.forward(pred)
        c = self.branch_label.forward(onehot)
        return self.head.forward(np.concatenate([a, c], axis=1))[:, 0]

    def backward(self, dlogit):
        """Backprop d(objective)/d(logit); returns d/d(pred)."""
        dcat = self.head.backward_output(np.asarray(dlogit, dtype=np.float64)[:, None])
        split = self.branch_pred.output_dim
        self.branch_label.backward_output(dcat[:, split:])
        return self.branch_pred.backward_output(dcat[:, :split])


def _sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _branch(dims, rng, std):
    net = mlp(dims, rng, classifier=False, init="normal", std=std)
    net.layers.append(ReLU())
    return net


def build_attack_model(k: int, rng: np.random.Generator, std: float = 0.01) -> AttackModel:
    """Attacker with branches [k,1024,512,64] and [k,512,64] and head [128,64,1]."""
    if k < 2:
        raise ConfigError("attack model needs at least two classes")
    bp = _branch((k,) + PRED_DIMS, rng, std)
    bl = _branch((k,) + LABEL_DIMS, rng, std)
    head = mlp((PRED_DIMS[-1] + LABEL_DIMS[-1],) + HEAD_DIMS, rng, classifier=False, init="normal", std=std)
    return AttackModel(bp, bl, head, k)


def attack_forward(fa: AttackModel, pred, y) -> np.ndarray:
    """Membership probability per row, clamped to [1e-12, 1 - 1e-12]."""
    return np.clip(_sigmoid(fa.logits(pred, y)), CLAMP, 1.0 - CLAMP)


def gain_and_input_grads(fa: AttackModel, pred_m, y_m, pred_n, y_n):
    """Empirical gain and its gradient w.r.t. the member/non-member predictions.

    Parameter gradients (of the negative gain) are left in the attacker's layers.
    """
    bm, bn = len(y_m), len(y_n)
    if bm == 0 or bn == 0:
        raise DataError("gain needs non-empty member and non-member batches")
    pred = np.concatenate([pred_m, pred_n], axis=0)
    y = np.concatenate([np.asarray(y_m), np.asarray(y_n)])
    z = fa.logits(pred, y)
    s = _sigmoid(z)
    gain = empirical_gain(s[:bm], s[bm:])
    # d gain / d z: (1 - s)/bm on members, -s/bn on non-members
    dz = np.concatenate([(1.0 - s[:bm]) / bm, -s[bm:] / bn])
    dpred = fa.backward(dz)
    return gain, dpred[:bm], dpred[bm:]


def attacker_step(fa: AttackModel, pred_m, y_m, pred_n, y_n, lr: float) -> float:
    """One Adam step on -gain; returns the gain before the step."""
    if fa.opt is None or fa.opt.learning_rate != lr:
        fa.opt = OptimizerState("adam", lr)
    bm, bn = len(y_m), len(y_n)
    pred = np.concatenate([pred_m, pred_n], axis=0)
    y = np.concatenate([np.asarray(y_m), np.asarray(y_n)])
    z = fa.logits(pred, y)
    s = _sigmoid(z)
    gain = empirical_gain(s[:bm], s[bm:])
    dz = np.concatenate([-(1.0 - s[:bm]) / bm, s[bm:] / bn])
    fa.backward(dz)
    optimizer_step(fa.opt, fa.params(), fa.grads())
    return gain


@dataclass
class AttackHistory:
    gains: List[float] = field(default_factory=list)
    member_batches: List[np.ndarray] = field(default_factory=list)


def train_attack(fa: AttackModel, net: Network, split: MembershipSplit, iterations: int,
                 batch_size: int, lr: float, rng: np.random.Generator,
                 keep_batches: bool = False) -> AttackHistory:
    """Adam on -gain over paired random mini-batches S of D and S' of D'.

    ``net`` is only read.  The returned history holds the per-iteration
    gains and, with ``keep_batches``, the member positions used in each S.
    """
    if len(split.member_y) == 0 or len(split.nonmember_y) == 0:
        raise DataError("cannot train an attacker on an empty split")
    pm = net.forward(split.member_x)
    pn = net.forward(split.nonmember_x)
    ym = np.asarray(split.member_y)
    yn = np.asarray(split.nonmember_y)
    hist = AttackHistory()
    bm = min(batch_size, len(ym))
    bn = min(batch_size, len(yn))
    for _ in range(iterations):
        s = rng.choice(len(ym), size=bm, replace=False)
        s2 = rng.choice(len(yn), size=bn, replace=False)
        hist.gains.append(attacker_step(fa, pm[s], ym[s], pn[s2], yn[s2], lr))
        if keep_batches:
            hist.member_batches.append(s)
    return hist


def train_attack_epochs(fa: AttackModel, net: Network, split: MembershipSplit, epochs: int,
                        batch_size: int, lr: float, rng: np.random.Generator) -> AttackHistory:
    """Post-hoc attacker training: ``epochs`` passes over the larger side of the split."""
    per_epoch = max(1, -(-max(len(split.member_y), len(split.nonmember_y)) // batch_size))
    return train_attack(fa, net, split, epochs * per_epoch, batch_size, lr, rng)


def attack_scores(fa: AttackModel, net: Network, split: MembershipSplit):
    sm = attack_forward(fa, net.forward(split.member_x), split.member_y)
    sn = attack_forward(fa, net.forward(split.nonmember_x), split.nonmember_y)
    return sm, sn


def accuracy_from_scores(member_scores, nonmember_scores) -> float:
    """Correct if score > 0.5 for a member or <= 0.5 for a non-member."""
    m = np.asarray(member_scores)
    n = np.asarray(nonmember_scores)
    if m.size + n.size == 0:
        raise DataError("empty split")
    return float((np.sum(m > 0.5) + np.sum(n <= 0.5)) / (m.size + n.size))


def attack_accuracy(fa: AttackModel, net: Network, split: MembershipSplit) -> float:
    return accuracy_from_scores(*attack_scores(fa, net, split))


def attack_gain(fa: AttackModel, net: Network, split: MembershipSplit) -> float:
    return empirical_gain(*attack_scores(fa, net, split))
