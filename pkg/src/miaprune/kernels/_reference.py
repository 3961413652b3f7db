"""Pure-numpy subset-sum kernels, used when the compiled module is absent.

Results agree with ``_fast`` exactly: sums are accumulated in the same
order and every distance is computed as ``abs((a + b) - t)``.
"""
import numpy as np


def subset_sums(weights):
    w = np.ascontiguousarray(weights, dtype=np.float64)
    out = np.zeros(1 << w.shape[0], dtype=np.float64)
    for i, wi in enumerate(w):
        half = 1 << i
        out[half:2 * half] = out[:half] + wi
    return out


def _nearest_per_row(a, b, t):
    # for each a[i] the b[j] nearest to t - a[i]
    pos = np.searchsorted(b, t - a)
    lo = np.clip(pos - 1, 0, b.shape[0] - 1)
    hi = np.clip(pos, 0, b.shape[0] - 1)
    e_lo = np.abs((a + b[lo]) - t)
    e_hi = np.abs((a + b[hi]) - t)
    use_hi = e_hi < e_lo
    j = np.where(use_hi, hi, lo)
    err = np.where(use_hi, e_hi, e_lo)
    return j, err


def closest_sum(a_sorted, b_sorted, target):
    a = np.ascontiguousarray(a_sorted, dtype=np.float64)
    b = np.ascontiguousarray(b_sorted, dtype=np.float64)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty sum tables")
    j, err = _nearest_per_row(a, b, float(target))
    i = int(np.argmin(err))
    return i, int(j[i]), float(err[i])


def best_errors(a_sorted, b_sorted, targets):
    a = np.ascontiguousarray(a_sorted, dtype=np.float64)
    b = np.ascontiguousarray(b_sorted, dtype=np.float64)
    ts = np.ascontiguousarray(targets, dtype=np.float64)
    out = np.empty(ts.shape[0])
    for k, t in enumerate(ts):
        out[k] = _nearest_per_row(a, b, float(t))[1].min()
    return out


def covers_targets(a_sorted, b_sorted, targets, eps, chunk=256):
    a = np.ascontiguousarray(a_sorted, dtype=np.float64)
    b = np.ascontiguousarray(b_sorted, dtype=np.float64)
    pending = np.ascontiguousarray(targets, dtype=np.float64)
    for start in range(0, a.shape[0], chunk):
        rows = a[start:start + chunk]
        still = []
        for t in pending:
            if _nearest_per_row(rows, b, float(t))[1].min() > eps:
                still.append(t)
        pending = np.asarray(still)
        if pending.size == 0:
            return True
    return False
