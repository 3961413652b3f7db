import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from miaprune import kernels


def brute_sums(w):
    # bit i of the subset index selects w[i]
    return np.array([sum(w[i] for i in range(len(w)) if (m >> i) & 1) for m in range(2 ** len(w))])


def test_subset_sums_bit_convention(backend):
    w = np.array([1.0, 10.0, 100.0])
    np.testing.assert_array_equal(backend.subset_sums(w), [0, 1, 10, 11, 100, 101, 110, 111])


def test_subset_sums_empty(backend):
    np.testing.assert_array_equal(backend.subset_sums(np.array([])), [0.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=8))
def test_subset_sums_match_enumeration(w):
    w = np.array(w)
    for mod in kernels.backends().values():
        np.testing.assert_allclose(mod.subset_sums(w), brute_sums(w), atol=1e-12)


def _tables(rng, n):
    w = rng.uniform(-1, 1, size=n)
    a = np.sort(kernels.subset_sums(w[: n // 2]))
    b = np.sort(kernels.subset_sums(w[n // 2:]))
    return w, a, b


@pytest.mark.parametrize("seed", range(4))
def test_closest_sum_is_global_optimum(backend, seed):
    rng = np.random.default_rng(seed)
    w, a, b = _tables(rng, 10)
    allsums = brute_sums(w)
    for t in rng.uniform(-0.6, 0.6, size=20):
        i, j, err = backend.closest_sum(a, b, t)
        assert err == pytest.approx(np.abs(allsums - t).min(), abs=1e-12)
        assert abs(a[i] + b[j] - t) == err


def test_best_errors_match_closest_sum(backend, rng):
    _, a, b = _tables(rng, 12)
    targets = np.linspace(-0.5, 0.5, 21)
    errs = backend.best_errors(a, b, targets)
    np.testing.assert_array_equal(errs, [backend.closest_sum(a, b, t)[2] for t in targets])


@pytest.mark.parametrize("eps", [1e-4, 1e-3, 0.02, 0.2])
def test_covers_targets_agrees_with_best_errors(backend, eps):
    for seed in range(10):
        _, a, b = _tables(np.random.default_rng(seed), 12)
        targets = np.linspace(-0.5, 0.5, 101)
        assert backend.covers_targets(a, b, targets, eps) == bool(np.all(backend.best_errors(a, b, targets) <= eps))


def test_backends_agree_bitwise():
    mods = list(kernels.backends().values())
    if len(mods) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(5)
    w = rng.uniform(-1, 1, size=16)
    sums = [m.subset_sums(w[:8]) for m in mods]
    assert np.array_equal(sums[0], sums[1])
    a, b = np.sort(sums[0]), np.sort(mods[0].subset_sums(w[8:]))
    t = np.linspace(-0.5, 0.5, 101)
    assert np.array_equal(mods[0].best_errors(a, b, t), mods[1].best_errors(a, b, t))


def test_backend_flag_reports_loaded_module():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.BACKEND in kernels.backends()


def test_pure_env_var_forces_fallback():
    import subprocess, sys
    out = subprocess.run([sys.executable, "-c", "from miaprune import kernels; print(kernels.BACKEND)"],
                         env={"MIAPRUNE_PURE": "1", "PATH": ""}, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
