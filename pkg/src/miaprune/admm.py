"""Cardinality-constrained training by ADMM, plus hard magnitude pruning.

The constrained problem ``min L_s(W, b)  s.t. card(W_i) <= n_i`` is split
into a W/b gradient step on the augmented Lagrangian, a Z step that projects
``W_i + U_i`` onto the cardinality set, and a scaled dual update for U.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericError
from .nn import Network, optimizer_step

INFEASIBLE = math.inf


@dataclass
class PruneSpec:
    """Per-layer keep ratios (canonical) or explicit keep counts."""

    keep_ratios: Optional[List[float]] = None
    keep_counts: Optional[List[int]] = None

    def __post_init__(self):
        if (self.keep_ratios is None) == (self.keep_counts is None):
            raise ConfigError("give exactly one of keep_ratios or keep_counts")
        if self.keep_ratios is not None:
            self.keep_ratios = [float(r) for r in self.keep_ratios]
            if any(not (0.0 < r <= 1.0) for r in self.keep_ratios):
                raise ConfigError(f"keep ratios must lie in (0, 1]: {self.keep_ratios}")
        else:
            self.keep_counts = [int(c) for c in self.keep_counts]

    @classmethod
    def uniform(cls, ratio: float, layers: int, first_layer_floor: Optional[float] = None) -> "PruneSpec":
        ratios = [float(ratio)] * layers
        if first_layer_floor is not None and layers > 0:
            ratios[0] = max(ratios[0], float(first_layer_floor))
        return cls(keep_ratios=ratios)

    @classmethod
    def from_prune_rates(cls, rates: Sequence[float]) -> "PruneSpec":
        keep = [1.0 - float(r) for r in rates]
        return cls(keep_ratios=keep)

    def counts(self, sizes: Sequence[int]) -> List[int]:
        """n_i per layer, ceil(ratio * numel) when given as ratios."""
        sizes = [int(s) for s in sizes]
        if self.keep_ratios is not None:
            if len(self.keep_ratios) != len(sizes):
                raise ConfigError(f"spec has {len(self.keep_ratios)} ratios for {len(sizes)} layers")
            # the small epsilon guards ratios like 0.1 * 640 = 64.00000000000001
            counts = [max(1, math.ceil(r * s - 1e-9)) for r, s in zip(self.keep_ratios, sizes)]
        else:
            if len(self.keep_counts) != len(sizes):
                raise ConfigError(f"spec has {len(self.keep_counts)} counts for {len(sizes)} layers")
            counts = list(self.keep_counts)
        for c, s in zip(counts, sizes):
            if not 1 <= c <= s:
                raise ConfigError(f"keep count {c} outside [1, {s}]")
        return counts

    def counts_for(self, net: Network) -> List[int]:
        return self.counts([layer.W.size for layer in net.dense_layers()])

    def label(self) -> str:
        if self.keep_ratios is not None:
            return "/".join(f"{r:g}" for r in self.keep_ratios)
        return "/".join(str(c) for c in self.keep_counts)


def cardinality_indicator(W, n: int) -> float:
    """0 when W has at most n non-zeros, +inf otherwise."""
    if n < 0:
        raise ValueError("cardinality bound must be non-negative")
    return 0.0 if np.count_nonzero(W) <= n else INFEASIBLE


def topn_mask(M, n: int) -> np.ndarray:
    """Binary mask of the n largest |M| entries; ties keep the lowest flat index."""
    M = np.asarray(M, dtype=np.float64)
    if not 0 <= n <= M.size:
        raise ValueError(f"n={n} outside [0, {M.size}]")
    order = np.argsort(-np.abs(M.ravel()), kind="stable")
    mask = np.zeros(M.size)
    mask[order[:n]] = 1.0
    return mask.reshape(M.shape)


def project_cardinality(M, n: int) -> np.ndarray:
    """Euclidean projection of M onto {Z : card(Z) <= n}."""
    M = np.asarray(M, dtype=np.float64)
    return M * topn_mask(M, n)


@dataclass
class ADMMState:
    Z: List[np.ndarray]
    U: List[np.ndarray]
    lam: List[float]
    n: List[int]
    k: int = 0
    residuals: List[float] = field(default_factory=list)

    def primal_residual(self, Ws) -> float:
        return float(math.sqrt(sum(float(np.sum((W - Z) ** 2)) for W, Z in zip(Ws, self.Z))))


def init_admm(net: Network, spec: PruneSpec, lam=1e-2) -> ADMMState:
    """Z_0 = projection of the current weights, U_0 = 0."""
    ns = spec.counts_for(net)
    layers = net.dense_layers()
    lams = [float(lam)] * len(layers) if np.isscalar(lam) else [float(v) for v in lam]
    if any(v < 0 for v in lams):
        raise ConfigError("ADMM penalties must be non-negative")
    Z = [project_cardinality(layer.W, n) for layer, n in zip(layers, ns)]
    U = [np.zeros_like(layer.W) for layer in layers]
    return ADMMState(Z, U, lams, ns)


def augmented_lagrangian_value(loss_value: float, Ws, Zs, Us, lams, ns=None) -> float:
    """L_s + sum_i g_i(Z_i) + lam_i/2 ||W_i - Z_i + U_i||^2 + lam_i/2 ||U_i||^2."""
    total = float(loss_value)
    if ns is not None:
        for Z, n in zip(Zs, ns):
            if cardinality_indicator(Z, n) == INFEASIBLE:
                return INFEASIBLE
    for W, Z, U, lam in zip(Ws, Zs, Us, lams):
        total += 0.5 * lam * float(np.sum((W - Z + U) ** 2))
        total += 0.5 * lam * float(np.sum(U * U))
    return total


def penalty_grads(net: Network, state: ADMMState) -> List[Optional[np.ndarray]]:
    """lam_i (W_i - Z_i + U_i) for each weight, None for each bias."""
    out: List[Optional[np.ndarray]] = []
    for layer, Z, U, lam in zip(net.dense_layers(), state.Z, state.U, state.lam):
        out.append(lam * (layer.W - Z + U) if lam != 0.0 else None)
        out.append(None)
    return out


def admm_w_step(net: Network, batch, fa, gamma: float, state: Optional[ADMMState], opt,
                nonmember_batch=None, steps: int = 1) -> float:
    """Gradient step(s) on L_s + sum lam_i/2 ||W_i - Z_i + U_i||^2.

    ``batch`` is ``(x, y)`` drawn from the training members; with an attacker
    and ``gamma > 0`` the min-max term also needs ``nonmember_batch``.  On a
    non-finite loss the parameters and optimizer state are restored before
    :class:`NumericError` is raised.
    """
    from .trainer import minmax_objective

    loss = float("nan")
    for _ in range(steps):
        saved = [p.copy() for p in net.params()]
        saved_opt = (opt.step, [m.copy() for m in opt.m], [v.copy() for v in opt.v])
        try:
            loss, grads = minmax_objective(net, fa, batch, gamma, nonmember_batch)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss {loss}")
            if state is not None:
                grads = [g if e is None else g + e for g, e in zip(grads, penalty_grads(net, state))]
            optimizer_step(opt, net.params(), grads)
            net.apply_masks()
            if not all(np.all(np.isfinite(p)) for p in net.params()):
                raise NumericError("parameters became non-finite")
        except NumericError:
            for p, s in zip(net.params(), saved):
                p[...] = s
            opt.step, opt.m, opt.v = saved_opt
            raise
    return loss


def admm_z_step(state: ADMMState, net: Network) -> List[np.ndarray]:
    state.Z = [project_cardinality(layer.W + U, n)
               for layer, U, n in zip(net.dense_layers(), state.U, state.n)]
    return state.Z


def admm_u_step(state: ADMMState, net: Network) -> List[np.ndarray]:
    for layer, U, Z in zip(net.dense_layers(), state.U, state.Z):
        U += layer.W - Z
    state.k += 1
    state.residuals.append(state.primal_residual([layer.W for layer in net.dense_layers()]))
    return state.U


def hard_prune(net: Network, spec: PruneSpec) -> List[np.ndarray]:
    """Keep the n_i largest-magnitude weights per layer and freeze the masks."""
    masks = []
    for layer, n in zip(net.dense_layers(), spec.counts_for(net)):
        layer.mask = topn_mask(layer.effective_weight(), n)
        layer.zero_masked()
        masks.append(layer.mask.copy())
    return masks


@dataclass
class SparsityReport:
    kept: List[int]
    total: List[int]

    @property
    def total_kept(self) -> int:
        return int(sum(self.kept))

    @property
    def total_weights(self) -> int:
        return int(sum(self.total))

    @property
    def ratio(self) -> float:
        return self.total_weights / self.total_kept if self.total_kept else math.inf

    def layer_ratios(self) -> List[float]:
        return [t / k if k else math.inf for k, t in zip(self.kept, self.total)]


def sparsity_report(net: Network) -> SparsityReport:
    kept, total = [], []
    for layer in net.dense_layers():
        kept.append(int(np.count_nonzero(layer.mask)))
        total.append(int(layer.W.size))
    return SparsityReport(kept, total)


def sparsity_from_counts(sizes: Sequence[int], spec: PruneSpec) -> SparsityReport:
    """Sparsity accounting for a parameter layout without building a network."""
    return SparsityReport(spec.counts(sizes), [int(s) for s in sizes])
