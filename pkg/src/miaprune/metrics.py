"""Attacker gain, the histogram Bayes attacker, Jensen-Shannon diagnostics
and train/non-train accuracy gaps.  All logarithms are natural."""
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import DataError

CLAMP = 1e-12
LOG4 = math.log(4.0)


def clamp_prob(p):
    return np.clip(np.asarray(p, dtype=np.float64), CLAMP, 1.0 - CLAMP)


def empirical_gain(member_scores, nonmember_scores) -> float:
    """mean log f_A over members + mean log(1 - f_A) over non-members.

    The scores are attacker outputs; they are clamped to [1e-12, 1 - 1e-12].
    """
    m = np.asarray(member_scores, dtype=np.float64).ravel()
    n = np.asarray(nonmember_scores, dtype=np.float64).ravel()
    if m.size == 0 or n.size == 0:
        raise DataError("empirical gain needs non-empty member and non-member sets")
    return float(np.mean(np.log(clamp_prob(m))) + np.mean(np.log(1.0 - clamp_prob(n))))


@dataclass
class OutputHistogram:
    edges: np.ndarray
    member_counts: np.ndarray
    nonmember_counts: np.ndarray
    channel: str = "true_class"

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.member_counts = np.asarray(self.member_counts, dtype=np.float64)
        self.nonmember_counts = np.asarray(self.nonmember_counts, dtype=np.float64)
        nb = self.edges.size - 1
        if nb < 1 or np.any(np.diff(self.edges) <= 0):
            raise ValueError("histogram edges must be strictly increasing")
        if self.member_counts.shape != (nb,) or self.nonmember_counts.shape != (nb,):
            raise ValueError("count vectors must have one entry per bin")
        if np.any(self.member_counts < 0) or np.any(self.nonmember_counts < 0):
            raise ValueError("negative bin count")

    def masses(self):
        """Normalized (member, non-member) bin masses."""
        mt = self.member_counts.sum()
        nt = self.nonmember_counts.sum()
        if mt <= 0 or nt <= 0:
            raise DataError("histogram side has no mass")
        return self.member_counts / mt, self.nonmember_counts / nt


def prediction_statistic(probs, labels=None, channel="true_class"):
    probs = np.asarray(probs, dtype=np.float64)
    if channel == "true_class":
        labels = np.asarray(labels, dtype=np.int64)
        return probs[np.arange(probs.shape[0]), labels]
    if channel == "max_prob":
        return probs.max(axis=1)
    raise ValueError(f"unknown channel {channel!r}")


def histogram_outputs(member_probs, member_labels, nonmember_probs, nonmember_labels,
                      bins: int = 32, channel: str = "true_class") -> OutputHistogram:
    """Histogram a scalar statistic of f(x) on [0, 1] for both sides."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    sm = prediction_statistic(member_probs, member_labels, channel)
    sn = prediction_statistic(nonmember_probs, nonmember_labels, channel)
    cm, _ = np.histogram(sm, bins=edges)
    cn, _ = np.histogram(sn, bins=edges)
    return OutputHistogram(edges, cm, cn, channel)


def optimal_attacker(hist: OutputHistogram) -> np.ndarray:
    """Per-bin Bayes membership probability p / (p + p'); NaN on empty bins."""
    if hist.member_counts.sum() + hist.nonmember_counts.sum() <= 0:
        raise DataError("histogram is empty")
    mt = hist.member_counts.sum()
    nt = hist.nonmember_counts.sum()
    p = hist.member_counts / mt if mt > 0 else np.zeros_like(hist.member_counts)
    q = hist.nonmember_counts / nt if nt > 0 else np.zeros_like(hist.nonmember_counts)
    tot = p + q
    out = np.full(p.shape, np.nan)
    occ = tot > 0
    out[occ] = p[occ] / tot[occ]
    return out


def _check_distribution(p, name):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError(f"{name} has negative mass")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} sums to {p.sum()}, not 1")
    return p


def _kl_terms(p, m):
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz] / m[nz])
    return out


def js_divergence(p, q) -> float:
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError("distributions differ in support length")
    m = 0.5 * (p + q)
    js = 0.5 * _kl_terms(p, m).sum() + 0.5 * _kl_terms(q, m).sum()
    return float(min(max(js, 0.0), math.log(2.0)))


def optimal_gain(p, q) -> float:
    """Gain of the Bayes attacker on exact discrete distributions (0 log 0 = 0)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    tot = p + q
    g = 0.0
    nz = p > 0
    g += float(np.sum(p[nz] * np.log(p[nz] / tot[nz])))
    nz = q > 0
    g += float(np.sum(q[nz] * np.log(q[nz] / tot[nz])))
    return g


def gain_identity_check(hist, reference=None):
    """(lhs, rhs, residual) for gain(optimal attacker) = -log 4 + 2 JS.

    ``hist`` is an :class:`OutputHistogram` or a ``(p, q)`` pair of exact
    distributions.  The left side is the optimal attacker's gain evaluated
    bin-wise on the histogram's own masses.  ``reference`` optionally
    supplies the exact ``(p, q)`` used for the right side, e.g. the true bin
    masses behind a Monte-Carlo histogram.
    """
    if isinstance(hist, OutputHistogram):
        p, q = hist.masses()
    else:
        p, q = (np.asarray(a, dtype=np.float64) for a in hist)
    lhs = optimal_gain(p, q)
    rp, rq = (p, q) if reference is None else reference
    rhs = -LOG4 + 2.0 * js_divergence(rp, rq)
    return lhs, rhs, abs(lhs - rhs)


@dataclass
class GainReport:
    gain: float
    attack_accuracy: float
    js_estimate: float
    accuracy_gap: float
    per_class_gap: List[float] = field(default_factory=list)
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")

    CSV_FIELDS = ("gain", "attack_accuracy", "js_estimate", "accuracy_gap",
                  "train_accuracy", "test_accuracy", "per_class_gap")

    def to_row(self) -> dict:
        return {
            "gain": repr(float(self.gain)),
            "attack_accuracy": repr(float(self.attack_accuracy)),
            "js_estimate": repr(float(self.js_estimate)),
            "accuracy_gap": repr(float(self.accuracy_gap)),
            "train_accuracy": repr(float(self.train_accuracy)),
            "test_accuracy": repr(float(self.test_accuracy)),
            "per_class_gap": ";".join(repr(float(g)) for g in self.per_class_gap),
        }

    @classmethod
    def from_row(cls, row: dict) -> "GainReport":
        pcg = row.get("per_class_gap", "")
        return cls(
            gain=float(row["gain"]),
            attack_accuracy=float(row["attack_accuracy"]),
            js_estimate=float(row["js_estimate"]),
            accuracy_gap=float(row["accuracy_gap"]),
            per_class_gap=[float(v) for v in pcg.split(";")] if pcg else [],
            train_accuracy=float(row.get("train_accuracy", "nan")),
            test_accuracy=float(row.get("test_accuracy", "nan")),
        )


def accuracy_gap(net, split, classes=None):
    """(train_acc, test_acc, gap, per_class_gaps) over a membership split.

    A class missing from either side gets a NaN gap rather than zero.
    """
    xm, ym = split.member_x, np.asarray(split.member_y)
    xn, yn = split.nonmember_x, np.asarray(split.nonmember_y)
    if ym.size == 0 or yn.size == 0:
        raise DataError("accuracy gap needs non-empty member and non-member sets")
    pm = np.argmax(net.forward(xm), axis=1) == ym
    pn = np.argmax(net.forward(xn), axis=1) == yn
    train_acc = float(pm.mean())
    test_acc = float(pn.mean())
    if classes is None:
        classes = int(max(ym.max(), yn.max())) + 1
    per_class = []
    for c in range(classes):
        a, b = ym == c, yn == c
        if not a.any() or not b.any():
            per_class.append(float("nan"))
        else:
            per_class.append(float(pm[a].mean() - pn[b].mean()))
    return train_acc, test_acc, train_acc - test_acc, per_class
