from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from whitneyfp.polyjet import (Poly, VecPoly, dim_poly, jet_mul, module_mul, multi_indices, order, shift_matrix,
                               taylor_jet, transfer_matrix)


def rand_poly(rng, n, deg, scale=1.0):
    return Poly(n, deg, rng.normal(scale=scale, size=dim_poly(n, deg)))


# --- basis -------------------------------------------------------------------


def test_multi_indices_graded():
    assert multi_indices(2, 2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert len(multi_indices(3, 4)) == dim_poly(3, 4) == math.comb(7, 4)


def test_order_rejects_negative():
    assert order((2, 0, 1)) == 3
    with pytest.raises(ValueError):
        order((1, -1))


# --- deriv_at ----------------------------------------------------------------


def test_deriv_linear():
    P = Poly.from_terms(1, 1, {(0,): 1.0, (1,): 2.0})
    assert P.deriv_at((1,), [0.0]) == 2.0


def test_deriv_above_degree_is_zero():
    P = rand_poly(np.random.default_rng(0), 2, 2)
    assert P.deriv_at((3, 0), [0.4, -1.0]) == 0.0
    assert P.deriv_at((1, 2), [0.4, -1.0]) == 0.0


def test_deriv_mixed_constant():
    P = Poly.from_terms(2, 2, {(1, 1): 1.0})
    assert P.deriv_at((1, 1), [5.0, 7.0]) == 1.0


def test_deriv_dimension_mismatch():
    with pytest.raises(ValueError):
        Poly.constant(2, 1).deriv_at((1,), [0.0, 0.0])


# --- jet_mul / module_mul ----------------------------------------------------


def test_jet_mul_truncates_square():
    a = Poly.from_terms(1, 1, {(0,): 1.0, (1,): 1.0})
    b = Poly.from_terms(1, 1, {(0,): 1.0, (1,): -1.0})
    assert jet_mul(a, b, [0.0]).allclose(Poly.constant(1, 1))


def test_jet_mul_recentered():
    y = Poly.from_terms(1, 1, {(1,): 1.0})
    assert jet_mul(y, y, [1.0]).allclose(Poly.from_terms(1, 1, {(0,): -1.0, (1,): 2.0}))


def test_jet_mul_identity():
    rng = np.random.default_rng(1)
    Q = rand_poly(rng, 2, 3)
    x = rng.normal(size=2)
    assert jet_mul(Poly.constant(2, 3), Q, x).allclose(Q)


def test_jet_mul_mismatch():
    with pytest.raises(ValueError):
        jet_mul(Poly.constant(1, 1), Poly.constant(1, 2), [0.0])
    with pytest.raises(ValueError):
        jet_mul(Poly.constant(1, 1), Poly.constant(2, 1), [0.0])


def test_module_mul_examples():
    y = Poly.from_terms(1, 1, {(1,): 1.0})
    P = VecPoly([Poly.from_terms(1, 1, {(0,): 1.0, (1,): 1.0}), Poly.constant(1, 1, 2.0)])
    out = module_mul(y, P, [0.0])
    assert out.allclose(VecPoly([y, y * 2.0]))
    assert module_mul(Poly.constant(1, 1), P, [0.3]).allclose(P)
    Z = VecPoly.zeros(1, 1, 2)
    assert module_mul(y, Z, [0.3]).allclose(Z)


def test_module_mul_type_check():
    with pytest.raises(TypeError):
        module_mul(Poly.constant(1, 1), Poly.constant(1, 1), [0.0])


# --- taylor_jet --------------------------------------------------------------


def test_taylor_jet_exp_sin():
    e = taylor_jet(lambda a: 1.0, [0.0], m=2)
    assert e.allclose(VecPoly([Poly.from_terms(1, 1, {(0,): 1.0, (1,): 1.0})]))
    sin_d = {(0,): 0.0, (1,): 1.0, (2,): 0.0}
    s = taylor_jet(sin_d, [0.0], m=3)
    assert s.allclose(VecPoly([Poly.from_terms(1, 2, {(1,): 1.0})]))


def test_taylor_jet_reproduces_polynomials():
    rng = np.random.default_rng(2)
    P = rand_poly(rng, 2, 2)
    x = rng.normal(size=2)
    d = dict(zip(multi_indices(2, 2), P.derivatives_at(x)))
    assert taylor_jet(d, x, m=3).components[0].allclose(P)


def test_taylor_jet_missing_data():
    with pytest.raises(ValueError):
        taylor_jet({(0,): 1.0}, [0.0], m=2)


# --- properties --------------------------------------------------------------

small = st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**31 - 1))


@settings(max_examples=60, deadline=None)
@given(small)
def test_jet_mul_is_taylor_of_product(args):
    n, m, seed = args
    rng = np.random.default_rng(seed)
    P, Q = rand_poly(rng, n, m - 1), rand_poly(rng, n, m - 1)
    x = rng.uniform(-1, 1, n)
    full = P.product(Q)
    d = dict(zip(multi_indices(n, m - 1), full.derivatives_at(x)[: dim_poly(n, m - 1)]))
    assert jet_mul(P, Q, x).allclose(taylor_jet(d, x, m).components[0], 1e-9)


@settings(max_examples=60, deadline=None)
@given(small)
def test_ring_laws(args):
    n, m, seed = args
    rng = np.random.default_rng(seed)
    P, Q, R = (rand_poly(rng, n, m - 1) for _ in range(3))
    x = rng.uniform(-1, 1, n)
    assert jet_mul(P, Q, x).allclose(jet_mul(Q, P, x), 1e-9)
    assert jet_mul(jet_mul(P, Q, x), R, x).allclose(jet_mul(P, jet_mul(Q, R, x), x), 1e-8)
    assert jet_mul(P, Q + R, x).allclose(jet_mul(P, Q, x) + jet_mul(P, R, x), 1e-9)


@settings(max_examples=60, deadline=None)
@given(small)
def test_recentering_round_trip(args):
    n, m, seed = args
    rng = np.random.default_rng(seed)
    P = rand_poly(rng, n, m - 1)
    x = rng.uniform(-2, 2, n)
    back = Poly.from_centered(n, m - 1, P.centered(x), x)
    assert np.max(np.abs(back.coeffs - P.coeffs)) <= 1e-12 * max(1.0, np.abs(P.coeffs).max()) * 10


@settings(max_examples=60, deadline=None)
@given(small)
def test_leibniz_expansion(args):
    n, m, seed = args
    rng = np.random.default_rng(seed)
    P, Q = rand_poly(rng, n, m - 1), rand_poly(rng, n, m - 1)
    x = rng.uniform(-1, 1, n)
    prod = jet_mul(P, Q, x)
    for alpha in multi_indices(n, m - 1):
        total = 0.0
        for beta in multi_indices(n, m - 1):
            if all(b <= a for a, b in zip(alpha, beta)):
                c = np.prod([math.comb(a, b) for a, b in zip(alpha, beta)])
                rest = tuple(a - b for a, b in zip(alpha, beta))
                total += c * P.deriv_at(beta, x) * Q.deriv_at(rest, x)
        assert prod.deriv_at(alpha, x) == pytest.approx(total, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(small)
def test_transfer_matrix_moves_derivatives(args):
    n, m, seed = args
    rng = np.random.default_rng(seed)
    P = rand_poly(rng, n, m - 1)
    a, h = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
    moved = transfer_matrix(n, m - 1, h) @ P.derivatives_at(a)
    assert np.allclose(moved, P.derivatives_at(a + h), atol=1e-10)
    assert np.allclose(shift_matrix(n, m - 1, h) @ shift_matrix(n, m - 1, -h), np.eye(dim_poly(n, m - 1)), atol=1e-10)
