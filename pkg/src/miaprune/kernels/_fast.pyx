# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled subset-sum kernels; see ``_reference.py`` for the numpy twin."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def subset_sums(weights):
    """All 2**n subset sums; bit i of the index selects weights[i]."""
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t size = (<Py_ssize_t>1) << n
    out = np.zeros(size, dtype=np.float64)
    cdef double[::1] s = out
    cdef Py_ssize_t i, j, half
    cdef double wi
    for i in range(n):
        half = (<Py_ssize_t>1) << i
        wi = w[i]
        for j in range(half):
            s[half + j] = s[j] + wi
    return out


cdef inline void _closest(const double[::1] a, const double[::1] b, double t,
                          Py_ssize_t *bi, Py_ssize_t *bj, double *berr) noexcept nogil:
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t j = b.shape[0] - 1
    cdef double d, e
    berr[0] = 1e300
    bi[0] = 0
    bj[0] = 0
    while i < a.shape[0] and j >= 0:
        d = (a[i] + b[j]) - t
        e = fabs(d)
        if e < berr[0]:
            berr[0] = e
            bi[0] = i
            bj[0] = j
        if d > 0:
            j -= 1
        elif d < 0:
            i += 1
        else:
            break


def closest_sum(a_sorted, b_sorted, double target):
    """Indices (i, j) into two ascending arrays minimising |a[i] + b[j] - target|."""
    cdef const double[::1] a = np.ascontiguousarray(a_sorted, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_sorted, dtype=np.float64)
    cdef Py_ssize_t bi, bj
    cdef double err
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty sum tables")
    _closest(a, b, target, &bi, &bj, &err)
    return int(bi), int(bj), float(err)


def best_errors(a_sorted, b_sorted, targets):
    """min |a + b - t| for every t in ``targets``."""
    cdef const double[::1] a = np.ascontiguousarray(a_sorted, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_sorted, dtype=np.float64)
    cdef const double[::1] ts = np.ascontiguousarray(targets, dtype=np.float64)
    out = np.empty(ts.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t k, bi, bj
    cdef double err
    with nogil:
        for k in range(ts.shape[0]):
            _closest(a, b, ts[k], &bi, &bj, &err)
            o[k] = err
    return out


def covers_targets(a_sorted, b_sorted, targets, double eps):
    """True iff every target has some a + b within ``eps`` (early exit)."""
    cdef const double[::1] a = np.ascontiguousarray(a_sorted, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(b_sorted, dtype=np.float64)
    cdef const double[::1] ts = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t k, i, j
    cdef double d, t
    cdef bint hit = True
    with nogil:
        for k in range(ts.shape[0]):
            t = ts[k]
            i = 0
            j = b.shape[0] - 1
            hit = False
            while i < a.shape[0] and j >= 0:
                d = (a[i] + b[j]) - t
                if fabs(d) <= eps:
                    hit = True
                    break
                if d > 0:
                    j -= 1
                else:
                    i += 1
            if not hit:
                break
    return bool(hit)
