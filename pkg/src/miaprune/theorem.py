"""Empirical checks of the pruned-subnetwork approximation results.

* :func:`theorem2_trial` estimates how often n uniform weights can hit every
  target in [-0.5, 0.5] to within eps by a subset sum.
* :func:`prune_relu_neuron`, :func:`prune_layer_approx` and
  :func:`prune_network_approx` build random two-layers-per-layer ReLU
  networks and choose pruning masks by subset sum so that the pruned
  network approximates a given target network.

Every reported error is a maximum over an explicit input grid, evaluated by
running the masked network forward rather than by summing the per-entry
subset-sum errors.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .errors import CapacityError, ConfigError
from .nn import Dense, Network, ReLU
from .rng import stream

EXACT_LIMIT = 24
MITM_LIMIT = 44
SIDE_LIMIT = 40


def _mask_bits(mask: int, offset: int = 0) -> List[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(offset + i)
        mask >>= 1
        i += 1
    return out


def subset_sum_oracle(weights, target: float, meet_in_the_middle: bool = True) -> Tuple[Tuple[int, ...], float]:
    """Globally optimal subset S (indices) minimising |target - sum(w[S])|.

    Up to 24 weights every subset is enumerated; larger instances (up to 44)
    use meet-in-the-middle over two sorted half tables.  The empty subset
    wins unless some subset is strictly closer.
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    n = w.size
    t = float(target)
    if n == 0:
        return (), abs(t)
    if n <= EXACT_LIMIT:
        sums = kernels.subset_sums(w)
        errs = np.abs(sums - t)
        best = int(np.argmin(errs))
        return tuple(_mask_bits(best)), float(errs[best])
    if not meet_in_the_middle:
        raise CapacityError(f"{n} weights exceed the exact enumeration budget of {EXACT_LIMIT}")
    if n > MITM_LIMIT:
        raise CapacityError(f"{n} weights exceed the meet-in-the-middle budget of {MITM_LIMIT}")
    h = n // 2
    a, b = kernels.subset_sums(w[:h]), kernels.subset_sums(w[h:])
    ao, bo = np.argsort(a, kind="stable"), np.argsort(b, kind="stable")
    i, j, err = kernels.closest_sum(a[ao], b[bo], t)
    if err >= abs(t):
        return (), abs(t)
    subset = _mask_bits(int(ao[i])) + _mask_bits(int(bo[j]), h)
    return tuple(subset), float(err)


def _half_tables(w):
    h = w.size // 2
    a = np.sort(kernels.subset_sums(w[:h]))
    b = np.sort(kernels.subset_sums(w[h:]))
    return a, b


def target_grid(step: float = 0.01, lo: float = -0.5, hi: float = 0.5) -> np.ndarray:
    count = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, count)


@dataclass
class TrialResult:
    n: int
    eps: float
    trials: int
    successes: int
    errors: Optional[np.ndarray] = None
    grid_step: float = 0.01

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @property
    def median_error(self) -> float:
        return float(np.median(self.errors)) if self.errors is not None else float("nan")


def theorem2_weights(n: int, seed: int, trial: int) -> np.ndarray:
    """Weights for one trial; a smaller n sees a prefix of a larger n's draw."""
    return stream(seed, "theorem2", trial).uniform(-1.0, 1.0, size=n)


def theorem2_trial(n: int, eps: float, trials: int, seed: int, grid_step: float = 0.01,
                   with_errors: bool = False) -> TrialResult:
    """Fraction of trials in which every grid target is eps-approximated.

    With ``with_errors`` the exact worst-case (over the grid) optimal error
    of each trial is also recorded.
    """
    if n < 1:
        raise ConfigError("need at least one weight")
    if n > MITM_LIMIT:
        raise CapacityError(f"n={n} exceeds the meet-in-the-middle budget of {MITM_LIMIT}")
    targets = target_grid(grid_step)
    ok = 0
    errors = np.empty(trials) if with_errors else None
    for k in range(trials):
        a, b = _half_tables(theorem2_weights(n, seed, k))
        if with_errors:
            worst = float(kernels.best_errors(a, b, targets).max())
            errors[k] = worst
            ok += worst <= eps
        else:
            ok += bool(kernels.covers_targets(a, b, targets, eps))
    return TrialResult(n, eps, trials, ok, errors, grid_step)


def smallest_sufficient_n(eps: float, delta: float, trials: int, seed: int,
                          candidates: Sequence[int] = (2, 4, 6, 8, 12, 16, 20, 24, 28, 32)) -> Optional[int]:
    """Smallest n whose empirical success rate reaches 1 - delta (the measured C log(2/delta))."""
    for n in candidates:
        if theorem2_trial(n, eps, trials, seed).success_rate >= 1.0 - delta:
            return n
    return None


def relu(x):
    return np.maximum(x, 0.0)


def relu_identity_holds(w, x) -> bool:
    """sigma(w x) == sigma(sigma(w x) - sigma(-w x)), elementwise and exactly."""
    wx = np.asarray(w, dtype=np.float64) * np.asarray(x, dtype=np.float64)
    return bool(np.array_equal(relu(wx), relu(relu(wx) - relu(-wx))))


def sign_vector(m: int) -> np.ndarray:
    """Fixed second-layer coefficients: +1, -1, +1, ..."""
    return np.where(np.arange(m) % 2 == 0, 1.0, -1.0)


def side_count_for_budget(budget: float, extra: int = 4) -> int:
    """Candidates per input sign needed to reach ``budget``: ~2 log2(1/budget) + extra."""
    if budget <= 0:
        raise ConfigError("budget must be positive")
    return int(math.ceil(2.0 * math.log2(max(1.0 / budget, 1.0)))) + extra


def width_for_budget(budget: float) -> int:
    return 2 * side_count_for_budget(budget)


def _select_side(coeffs: np.ndarray, idx: np.ndarray, target: float):
    idx = idx[:SIDE_LIMIT]
    subset, err = subset_sum_oracle(coeffs[idx], target)
    return idx[list(subset)], err


def _fit_entry(w_first: np.ndarray, u: np.ndarray, target: float):
    """Mask over one neuron block so that u . relu(p * w x) ~ target * x.

    For x >= 0 only neurons with w > 0 fire and contribute u_j w_j x; for
    x < 0 only neurons with w < 0 fire and contribute u_j w_j x.  Each sign
    is therefore an independent subset-sum problem on u_j w_j.
    """
    c = u * w_first
    pos, neg = np.flatnonzero(w_first > 0), np.flatnonzero(w_first < 0)
    sel_p, err_p = _select_side(c, pos, target)
    sel_n, err_n = _select_side(c, neg, target)
    p = np.zeros(w_first.size)
    p[sel_p] = 1.0
    p[sel_n] = 1.0
    return p, err_p, err_n


@dataclass
class PrunedApproxReport:
    error: float
    eps: float
    width: int
    grid_points: int
    budgets: Dict[str, float] = field(default_factory=dict)
    entry_errors: Optional[np.ndarray] = None
    masks: List[np.ndarray] = field(default_factory=list)
    network: Optional[Network] = None

    @property
    def success(self) -> bool:
        return self.error <= self.eps


def _grid(dim: int, points: Optional[int] = None, max_total: int = 200_000) -> np.ndarray:
    if points is None:
        points = 101
        while points > 3 and points ** dim > max_total:
            points = (points - 1) // 2 + 1
    axis = np.linspace(-1.0, 1.0, points)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def prune_relu_neuron(target_w: float, width: int, eps: float, seed: int, grid_points: int = 101) -> PrunedApproxReport:
    """Approximate x -> target_w * x on [-1, 1] by a pruned random ReLU pair."""
    rng = stream(seed, "relu_neuron")
    w = rng.uniform(-1.0, 1.0, size=width)
    u = sign_vector(width)
    p, err_p, err_n = _fit_entry(w, u, float(target_w))
    xs = np.linspace(-1.0, 1.0, grid_points)
    approx = relu(np.outer(xs, p * w)) @ u
    error = float(np.max(np.abs(target_w * xs - approx)))
    return PrunedApproxReport(error, eps, width, grid_points,
                              budgets={"positive_side": eps / 2, "negative_side": eps / 2},
                              entry_errors=np.array([err_p, err_n]), masks=[p])


@dataclass
class _Stage:
    first: Dense
    second: Dense
    entry_errors: np.ndarray


def _build_stage(target_W: np.ndarray, budget: float, rng, width: Optional[int]) -> _Stage:
    """Random pair (hidden, output) whose pruned form approximates x -> target_W x.

    Hidden neurons come in one block of ``width`` per target entry (j, i);
    block (j, i) keeps only input i in the first layer and feeds only output
    j in the second.
    """
    k, m = target_W.shape
    width = width or width_for_budget(budget)
    H = k * m * width
    W1 = rng.uniform(-1.0, 1.0, size=(H, m))
    U = np.tile(sign_vector(H), (k, 1))
    P1 = np.zeros((H, m))
    P2 = np.zeros((k, H))
    errs = np.zeros((k, m))
    for j in range(k):
        for i in range(m):
            blk = slice((j * m + i) * width, (j * m + i + 1) * width)
            p, ep, en = _fit_entry(W1[blk, i], U[j, blk], float(target_W[j, i]))
            P1[blk, i] = p
            P2[j, blk] = p
            errs[j, i] = max(ep, en)
    return _Stage(Dense(W1, np.zeros(H), P1), Dense(U, np.zeros(k), P2), errs)


def prune_layer_approx(target_W, eps: float, seed: int, width: Optional[int] = None,
                       grid_points: Optional[int] = None) -> PrunedApproxReport:
    """Approximate x -> target_W x (k x m) with per-entry budget eps / (m k)."""
    target_W = np.atleast_2d(np.asarray(target_W, dtype=np.float64))
    k, m = target_W.shape
    budget = eps / (m * k)
    stage = _build_stage(target_W, budget, stream(seed, "layer_approx"), width)
    net = Network([stage.first, ReLU(), stage.second])
    X = _grid(m, grid_points)
    error = float(np.max(np.abs(X @ target_W.T - net.forward(X))))
    return PrunedApproxReport(error, eps, stage.first.out_dim // (k * m), int(round(len(X) ** (1 / m))),
                              budgets={"entry": budget}, entry_errors=stage.entry_errors,
                              masks=[stage.first.mask, stage.second.mask], network=net)


def _target_weights(target_net: Network) -> List[np.ndarray]:
    dense = target_net.dense_layers()
    if len(dense) > 2:
        raise ConfigError("target depth above 2 is outside the desk-scale lab")
    for layer in dense:
        if np.any(layer.b != 0):
            raise ConfigError("target network must be bias-free")
    return [layer.effective_weight() for layer in dense]


def target_forward(Ws: Sequence[np.ndarray], X: np.ndarray) -> np.ndarray:
    h = X
    for i, W in enumerate(Ws):
        h = h @ W.T
        if i < len(Ws) - 1:
            h = relu(h)
    return h


def prune_network_approx(target_net: Network, eps: float, seed: int, budget_scale: float = 1.0,
                         grid_points: Optional[int] = None) -> PrunedApproxReport:
    """Prune a random network of twice the depth to approximate ``target_net``.

    Each target layer gets its own (hidden, output) pair.  A depth-1 target
    spends the whole eps on its single layer; a depth-2 target splits eps/2
    per stage, with the first stage's budget shrunk by the second layer's
    row-sum norm and the second stage's by the hidden activation bound.
    ``budget_scale`` multiplies every per-entry budget.
    """
    Ws = _target_weights(target_net)
    d = Ws[0].shape[1]
    X = _grid(d, grid_points)
    if len(Ws) == 1:
        rep = prune_layer_approx(Ws[0], eps, seed, grid_points=grid_points)
        if budget_scale != 1.0:
            k, m = Ws[0].shape
            stage = _build_stage(Ws[0], budget_scale * eps / (m * k), stream(seed, "layer_approx"), None)
            net = Network([stage.first, ReLU(), stage.second])
            rep = PrunedApproxReport(float(np.max(np.abs(target_forward(Ws, X) - net.forward(X)))), eps,
                                     stage.first.out_dim // (k * m), rep.grid_points,
                                     {"entry": budget_scale * eps / (m * k)}, stage.entry_errors,
                                     [stage.first.mask, stage.second.mask], net)
        return rep
    W1, W2 = Ws
    norm2 = max(1.0, float(np.abs(W2).sum(axis=1).max()))
    bound1 = max(1.0, float(np.abs(W1).sum(axis=1).max()) + eps / 2)
    b1 = budget_scale * (eps / 2) / (W1.size * norm2)
    b2 = budget_scale * (eps / 2) / (W2.size * bound1)
    s1 = _build_stage(W1, b1, stream(seed, "network_approx", 0), None)
    s2 = _build_stage(W2, b2, stream(seed, "network_approx", 1), None)
    net = Network([s1.first, ReLU(), s1.second, ReLU(), s2.first, ReLU(), s2.second])
    error = float(np.max(np.abs(target_forward(Ws, X) - net.forward(X))))
    return PrunedApproxReport(error, eps, s1.first.out_dim + s2.first.out_dim, int(round(len(X) ** (1 / d))),
                              budgets={"stage1_entry": b1, "stage2_entry": b2},
                              entry_errors=np.concatenate([s1.entry_errors.ravel(), s2.entry_errors.ravel()]),
                              masks=[s1.first.mask, s1.second.mask, s2.first.mask, s2.second.mask], network=net)


def random_target(depth: int, width: int, dim: int, out: int, seed: int) -> Network:
    """Bias-free target with entries in [-0.5, 0.5] (row sums bounded by width / 2)."""
    rng = stream(seed, "target")
    dims = [dim] + [width] * (depth - 1) + [out]
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        layers.append(Dense(rng.uniform(-0.5, 0.5, size=(b, a)), np.zeros(b)))
        if i < depth - 1:
            layers.append(ReLU())
    return Network(layers)
