"""Subset-sum kernels: compiled when available, numpy otherwise.

Set ``MIAPRUNE_PURE=1`` to force the numpy implementation.
"""
import os

from . import _reference

BACKEND = "python"
_impl = _reference
if os.environ.get("MIAPRUNE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _fast as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

subset_sums = _impl.subset_sums
closest_sum = _impl.closest_sum
best_errors = _impl.best_errors
covers_targets = _impl.covers_targets


def backends():
    """Mapping of every importable backend name to its module."""
    out = {"python": _reference}
    try:
        from . import _fast
        out["cython"] = _fast
    except ImportError:
        pass
    return out
