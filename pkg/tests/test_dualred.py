from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from whitneyfp.clustering import ClusterTree, branch_nodes, build_clustering, dual_cluster_norm, trunks
from whitneyfp.dualred import (DualField, DualFunctional, aggregate, linear_fiber, norm_fiber, reduce_once,
                               reduce_support, reduce_with_clustering, support_bound)
from whitneyfp.polyjet import Poly, VecPoly, dim_poly
from whitneyfp.selection import fiber_function, random_instance, selection_norm_dual
from whitneyfp.whitney import PointSet


def rand_dual(rng, S, m, D):
    return DualField(S, rng.normal(size=(len(S), D, dim_poly(S.n, m - 1))), m)


def rand_vecpoly(rng, n, deg, D):
    return VecPoly([Poly(n, deg, rng.normal(size=dim_poly(n, deg))) for _ in range(D)])


# --- functionals -------------------------------------------------------------


def test_functional_rebase_preserves_action():
    rng = np.random.default_rng(0)
    f = DualFunctional(rng.normal(size=2), rng.normal(size=(2, 6)), 3)
    P = rand_vecpoly(rng, 2, 2, 2)
    assert f.rebase(rng.normal(size=2))(P) == pytest.approx(f(P), rel=1e-10)


def test_evaluation_functional():
    P = VecPoly([Poly.from_terms(1, 1, {(0,): 2.0, (1,): 3.0})])
    assert DualFunctional.evaluation([1.0], 2)(P) == pytest.approx(5.0)
    assert DualFunctional.evaluation([1.0], 2, alpha=(1,))(P) == pytest.approx(3.0)


def test_bad_coefficients():
    with pytest.raises(ValueError):
        DualFunctional([0.0], np.zeros((1, 3)), 2)
    with pytest.raises(ValueError):
        DualField(PointSet([[0.0]]), np.zeros((2, 1, 1)), 1)


# --- aggregate ---------------------------------------------------------------


def test_aggregate_trivial_cases():
    rng = np.random.default_rng(1)
    S = PointSet(rng.uniform(size=(3, 2)))
    xi = rand_dual(rng, S, 2, 1)
    assert np.allclose(aggregate(xi, [1]).coeffs, xi.coeffs[1])
    only = DualField(S, np.where(np.arange(3)[:, None, None] == 2, xi.coeffs, 0.0), 2)
    assert np.allclose(aggregate(only, range(3), at=S.points[2]).coeffs, xi.coeffs[2])
    with pytest.raises(ValueError):
        aggregate(xi, [5])
    with pytest.raises(ValueError):
        aggregate(xi, [])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 2), st.integers(1, 3), st.integers(1, 2), st.integers(0, 2**31 - 1))
def test_aggregate_pairing_oracle(n, m, D, seed):
    rng = np.random.default_rng(seed)
    S = PointSet(rng.uniform(size=(3, n)))
    xi = rand_dual(rng, S, m, D)
    P = rand_vecpoly(rng, n, m - 1, D)
    brute = sum(xi[i](P) for i in range(3))
    agg = aggregate(xi, range(3), at=rng.normal(size=n))
    assert agg(P) == pytest.approx(brute, rel=1e-9, abs=1e-9)


# --- reduce_once -------------------------------------------------------------


def two_point(c0, c1):
    S = PointSet([[0.0], [1.0]])
    return build_clustering(S), DualField(S, np.array([[[c0]], [[c1]]]), 1)


def test_reduce_equal_vectors_doubles():
    T, xi = two_point(1.5, 1.5)
    eta, step = reduce_once(T, xi, linear_fiber(np.ones((2, 1, 1))), trunks(T)[0])
    assert sorted(eta.coeffs.ravel().tolist()) == [0.0, 3.0]
    assert step.theta_max == pytest.approx(2.0)
    assert eta.total().coeffs == pytest.approx(xi.total().coeffs)


def test_reduce_cancellation():
    T, xi = two_point(1.0, -1.0)
    phi = linear_fiber(np.ones((2, 1, 1)))
    eta, step = reduce_once(T, xi, phi, trunks(T)[0])
    assert np.all(eta.coeffs == 0.0)
    assert phi.values(eta).sum() == pytest.approx(phi.values(xi).sum()) == 0.0


def test_reduce_independent_raises():
    T, xi = two_point(1.0, 2.0)
    # augmented vectors (1, 1) and (2, 0) are independent
    phi = linear_fiber(np.array([[[1.0]], [[0.0]]]))
    with pytest.raises(ValueError):
        reduce_once(T, xi, phi, trunks(T)[0])


@pytest.mark.parametrize("seed", range(10))
def test_reduce_once_conservation(seed):
    rng = np.random.default_rng(seed)
    S = PointSet(rng.uniform(size=(4, 1)))
    T = build_clustering(S)
    xi = rand_dual(rng, S, 1, 1)
    phi = norm_fiber()
    for tr in trunks(T):
        if len(branch_nodes(T, tr)) > 2:
            eta, step = reduce_once(T, xi, phi, tr)
            assert np.abs(eta.total().coeffs - xi.total().coeffs).max() <= 1e-10
            assert abs(phi.values(eta).sum() - phi.values(xi).sum()) <= 1e-10
            assert 0.0 <= step.theta_min and step.theta_max <= 2.0 + 1e-12
            assert len(eta.support()) < len(xi.support())
            break


# --- reduce_support ----------------------------------------------------------


def test_support_bound():
    assert [support_bound(d) for d in (1, 3, 6)] == [2, 8, 64]
    with pytest.raises(ValueError):
        support_bound(0)


def test_no_reduction_needed():
    S = PointSet([[0.0], [1.0]])
    xi = DualField(S, np.array([[[1.0]], [[2.0]]]), 1)
    res = reduce_with_clustering(xi, linear_fiber(np.array([[[1.0]], [[0.0]]])))
    assert res.support == [0, 1] and not res.steps
    assert np.array_equal(res.eta.coeffs, xi.coeffs)


@pytest.mark.parametrize("seed", range(8))
def test_reduction_of_certificates(seed):
    rng = np.random.default_rng(2000 + seed)
    I = random_instance(rng, ("box", "singleton")[seed % 2], 1, 1, 1, int(rng.integers(5, 9)))
    xi = selection_norm_dual(I).certificate
    phi = fiber_function(I)
    res = reduce_with_clustering(xi, phi)
    assert len(res.support) <= support_bound(I.dimP)
    assert np.abs(res.eta.total().coeffs - xi.total().coeffs).max() <= 1e-10
    assert abs(phi.values(res.eta).sum() - phi.values(xi).sum()) <= 1e-8
    # eta_x is a nonnegative multiple of xi_x
    for i in range(len(xi)):
        a, b = xi.coeffs[i].ravel(), res.eta.coeffs[i].ravel()
        if np.any(b):
            t = b @ a / (a @ a)
            assert t >= 0 and np.allclose(b, t * a, atol=1e-12)


def test_reduce_support_rejects_mismatch():
    T = build_clustering([[0.0], [1.0]])
    xi = DualField(PointSet([[0.0], [2.0]]), np.ones((2, 1, 1)), 1)
    with pytest.raises(ValueError):
        reduce_support(T, xi, norm_fiber())


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 7), st.integers(0, 2**31 - 1))
def test_reduction_random_fields(k, seed):
    rng = np.random.default_rng(seed)
    S = PointSet(rng.uniform(size=(k, 1)))
    xi = rand_dual(rng, S, 1, 1)
    phi = norm_fiber()
    res = reduce_with_clustering(xi, phi)
    assert len(res.support) <= 2
    assert np.abs(res.eta.total().coeffs - xi.total().coeffs).max() <= 1e-10 * (1 + np.abs(xi.coeffs).sum())
    assert abs(phi.values(res.eta).sum() - phi.values(xi).sum()) <= 1e-10 * (1 + np.abs(xi.coeffs).sum())
    assert res.inflation > 0


# --- fiber function ----------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10.0))
def test_fiber_homogeneous(seed, t):
    rng = np.random.default_rng(seed)
    I = random_instance(rng, ("box", "halfspaces")[seed % 2], 1, 2, 1, 2)
    phi = fiber_function(I)
    f = DualFunctional(I.S.points[0], rng.normal(size=(1, 2)), 2)
    a, b = phi(0, f), phi(0, f * t)
    if np.isfinite(a):
        assert b == pytest.approx(t * a, rel=1e-7, abs=1e-9)
    else:
        assert b == a
    assert phi(0, f * 0.0) == 0.0


def test_cone_property():
    # f_x is concave (superadditive) wherever finite: it is a sup over a cone
    rng = np.random.default_rng(4)
    I = random_instance(rng, "halfspaces", 1, 2, 1, 2)
    phi = fiber_function(I)
    for _ in range(10):
        f, g = (DualFunctional(I.S.points[0], rng.normal(size=(1, 2)), 2) for _ in range(2))
        a, b, c = phi(0, f), phi(0, g), phi(0, f + g)
        if np.isfinite(a) and np.isfinite(b):
            assert c >= a + b - 1e-8
