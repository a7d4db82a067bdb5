from __future__ import annotations

import numpy as np
import pytest

from whitneyfp import _simplex_py, kernels
from whitneyfp.convexlp import LPProblem, lp_solve

needs_ext = pytest.mark.skipif(kernels._simplex_core is None, reason="compiled kernel not built")


@pytest.fixture
def restore_backend():
    yield
    kernels.use_backend("cython" if kernels._simplex_core is not None else "python")


def _tableau(rng, m, n):
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.5, 2.0, m)
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -rng.normal(size=n) ** 2
    return T, np.arange(n, n + m, dtype=np.intp)


@needs_ext
def test_pivot_parity():
    rng = np.random.default_rng(0)
    T, _ = _tableau(rng, 6, 5)
    T2 = T.copy()
    kernels._simplex_core.pivot(T, 2, 3)
    _simplex_py.pivot(T2, 2, 3)
    assert np.allclose(T, T2, atol=1e-14)


@needs_ext
def test_loop_parity():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        T, basis = _tableau(rng, 8, 6)
        T2, b2 = T.copy(), basis.copy()
        r1 = kernels._simplex_core.simplex_loop(T, basis, 14, 1e-10, 1000)
        r2 = _simplex_py.simplex_loop(T2, b2, 14, 1e-10, 1000)
        assert tuple(r1) == tuple(r2)
        assert np.array_equal(basis, b2)
        assert np.allclose(T, T2, atol=1e-9)


def test_pivot_cap_reported():
    rng = np.random.default_rng(1)
    T, basis = _tableau(rng, 8, 6)
    status, k = _simplex_py.simplex_loop(T, basis, 14, 1e-10, 0)
    assert status == _simplex_py.PIVOT_CAP and k == 0


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_backends_agree_on_lp(backend, restore_backend):
    if backend == "cython" and kernels._simplex_core is None:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(4)
    A = rng.normal(size=(15, 6))
    b = A @ rng.uniform(-1, 1, 6) + 0.5
    A = np.vstack([A, np.eye(6), -np.eye(6)])
    b = np.concatenate([b, np.full(12, 3.0)])
    P = LPProblem(rng.normal(size=6), A, b)
    kernels.use_backend("python")
    ref = lp_solve(P)
    kernels.use_backend(backend)
    sol = lp_solve(P)
    assert sol.value == pytest.approx(ref.value, abs=1e-12)
    assert sol.pivots == ref.pivots


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
