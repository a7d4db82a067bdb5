"""Acceptance criteria, one test each, at the stated tolerances and time budgets.

Every test prints a single ``[acceptance] PASS|FAIL`` line with the measured
quantities, then asserts.
"""
from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest
from scipy.optimize import linprog

from whitneyfp.clustering import build_clustering, cluster_norm, validate_clustering
from whitneyfp.convexlp import HalfspaceBody, HullBody, LPProblem, lp_solve, polytope_approx
from whitneyfp.dualred import reduce_with_clustering, support_bound
from whitneyfp.polyjet import _basis, dim_poly, multi_indices
from whitneyfp.selection import (Polytope, SelectionInstance, finiteness_ratio, fiber_function, ksharp,
                                 random_constraint, random_instance, random_points, selection_norm_dual,
                                 selection_norm_primal)
from whitneyfp.shapefield import canonical_shape_field, convexity_check, leibniz_bound, lift, lifted_seminorm_check, project
from whitneyfp.whitney import PointSet, WhitneyField, extension_norm_estimate, field_norm, whitney_extend


@pytest.fixture
def verdict(capsys):
    def report(name: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance] {'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return report


def _fd(f, x, alpha, h):
    stencils = {0: [(0.0, 1.0)], 1: [(-1.0, -0.5), (1.0, 0.5)], 2: [(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)]}
    total = 0.0
    for combo in itertools.product(*(stencils[a] for a in alpha)):
        total = total + np.prod([c[1] for c in combo]) * f(x + np.array([c[0] for c in combo]) * h)
    return total / h ** sum(alpha)


def test_ksharp_formula(verdict):
    t0 = time.perf_counter()
    ok = ksharp(2, 2, 1) == 8 == 4 * 2 ** (2 - 1)
    bad = [(m, n) for m in range(1, 6) for n in range(1, 6)
           if ksharp(m, n, 1, max_dim=1000) != 2 ** math.comb(n + m - 1, m - 1)]
    ms = (time.perf_counter() - t0) * 1000
    verdict("k# formula", ok and not bad and ms < 1.0,
            f"ksharp(2,2,1)=8, {25 - len(bad)}/25 (m,n) <= 5 exact, {ms:.3f} ms (< 1 ms)")


def test_lp_duality(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    solved = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        nonneg = seed % 2 == 1
        nv, nr = int(rng.integers(1, 13)), int(rng.integers(1, 21))
        A = rng.normal(size=(nr, nv))
        x0 = rng.uniform(0.1, 1.0, nv) if nonneg else rng.uniform(-1, 1, nv)
        b = A @ x0 + rng.uniform(0.05, 1.0, nr)
        if not nonneg:
            # bounded: an explicit box (row count stays <= 20 + 2 * 12)
            A = np.vstack([A, np.eye(nv), -np.eye(nv)])
            b = np.concatenate([b, np.full(2 * nv, 5.0)])
            kinds = ("free",) * nv
        else:
            A = np.vstack([A, np.ones((1, nv))])
            b = np.concatenate([b, [5.0 * nv]])
            kinds = ("nonneg",) * nv
        sol = lp_solve(LPProblem(rng.normal(size=nv), A, b, var_kinds=kinds, sense="max"))
        if sol.optimal:
            solved += 1
            worst = max(worst, abs(sol.value - sol.dual_value) / (1 + abs(sol.value)))
    dt = time.perf_counter() - t0
    verdict("LP duality", solved == 200 and worst <= 1e-8 and dt < 5,
            f"{solved}/200 optimal (100 free, 100 nonneg), max |p-d|/(1+|p|) = {worst:.2e} (<= 1e-8), {dt:.2f} s (< 5 s)")


def test_selection_primal_dual(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n, m, D = int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        I = random_instance(rng, ("box", "halfspaces")[seed % 2], n, m, D, int(rng.integers(1, 6)),
                            ("norm", "seminorm")[(seed // 2) % 2])
        p, d = selection_norm_primal(I).value, selection_norm_dual(I).value
        worst = max(worst, abs(p - d) / (1 + p))
    line = PointSet([[0.0], [1.0]])
    h2 = selection_norm_primal(SelectionInstance(1, 1, 1, line, [Polytope.point([0.0]), Polytope.point([1.0])])).value
    h4 = selection_norm_primal(SelectionInstance(1, 1, 1, line, [Polytope.point([0.0]), Polytope.box([2.0], [3.0])])).value
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and abs(h2 - 2) <= 1e-9 and abs(h4 - 4) <= 1e-9 and dt < 60
    verdict("selection primal/dual", ok,
            f"100 instances max gap/(1+v) = {worst:.2e} (<= 1e-6), hand instances {h2:.12g} and {h4:.12g}, {dt:.1f} s (< 60 s)")


def test_support_reduction(verdict):
    t0 = time.perf_counter()
    big, e_sum, e_phi, infl = 0, 0.0, 0.0, 0.0
    for s in range(100):
        rng = np.random.default_rng(1000 + s)
        I = random_instance(rng, ("box", "halfspaces", "singleton")[s % 3], 1, 1, 1, int(rng.integers(5, 9)),
                            ("norm", "seminorm")[s % 2])
        xi = selection_norm_dual(I).certificate
        phi = fiber_function(I)
        res = reduce_with_clustering(xi, phi)
        big = max(big, len(res.support))
        e_sum = max(e_sum, float(np.abs(xi.total().coeffs - res.eta.total().coeffs).max()))
        e_phi = max(e_phi, abs(float(phi.values(xi).sum() - phi.values(res.eta).sum())))
        infl = max(infl, res.inflation)
    dt = time.perf_counter() - t0
    bound = support_bound(1)
    verdict("support reduction", big <= bound == 2 and e_sum <= 1e-10 and e_phi <= 1e-8 and dt < 60,
            f"max |S'| = {big} (<= {bound}), sum xi error {e_sum:.1e} (<= 1e-10), sum Phi error {e_phi:.1e} "
            f"(<= 1e-8), max dual cluster norm inflation {infl:.3f}, {dt:.1f} s (< 60 s)")


def test_weak_finiteness_ratio(verdict):
    t0 = time.perf_counter()
    low, trivial_bad, worst, worst_seed = math.inf, 0, 0.0, None
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n, m, D = int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        size = int(rng.integers(2, 13))
        I = random_instance(rng, ("box", "halfspaces", "singleton")[seed % 3], n, m, D, size,
                            ("norm", "seminorm")[(seed // 3) % 2])
        k = ksharp(m, n, D)
        r = finiteness_ratio(I, k)
        low = min(low, r.ratio)
        if size <= k and r.ratio != 1.0:
            trivial_bad += 1
        if r.ratio > worst:
            worst, worst_seed = r.ratio, seed
    dt = time.perf_counter() - t0
    ok = low >= 1 - 1e-9 and trivial_bad == 0 and math.isfinite(worst) and dt < 600
    verdict("weak finiteness ratio", ok,
            f"min ratio {low:.12f} (>= 1 - 1e-9), {trivial_bad} non-unit ratios with |S| <= k, "
            f"empirical max {worst:.6f} (seed {worst_seed}), {dt:.1f} s (< 600 s)")


def _linf_dist_hull(P, v):
    k = len(P)
    # variables (lambda, t): min t, |P^T lambda - v| <= t, sum lambda = 1
    A = np.block([[P.T, -np.ones((2, 1))], [-P.T, -np.ones((2, 1))]])
    r = linprog(np.r_[np.zeros(k), 1.0], A_ub=A, b_ub=np.r_[v, -v], A_eq=np.r_[np.ones(k), 0.0][None],
                b_eq=[1.0], bounds=[(0, None)] * k + [(None, None)], method="highs")
    return r.fun


def _linf_dist_halfspaces(A, b, v):
    M = np.block([[A, np.zeros((len(A), 1))], [np.eye(2), -np.ones((2, 1))], [-np.eye(2), -np.ones((2, 1))]])
    r = linprog([0, 0, 1.0], A_ub=M, b_ub=np.r_[b, v, -v], bounds=[(None, None)] * 3, method="highs")
    return r.fun


def test_polytope_approximation(verdict):
    t0 = time.perf_counter()
    missed, far, checked = 0, 0.0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        if seed % 2 == 0:
            P = rng.uniform(-1, 1, size=(int(rng.integers(1, 8)), 2))
            K = HullBody(P)
            samples = np.vstack([P, rng.dirichlet(np.ones(len(P)), size=30) @ P])
            dist = lambda v: _linf_dist_hull(P, v)
        else:
            c = rng.uniform(-0.5, 0.5, 2)
            A = rng.normal(size=(int(rng.integers(3, 8)), 2))
            A /= np.linalg.norm(A, axis=1, keepdims=True)
            b = A @ c + rng.uniform(0.05, 0.8, len(A))
            A, b = np.vstack([A, np.eye(2), -np.eye(2)]), np.r_[b, np.full(4, 1.5)]
            K = HalfspaceBody(A, b)
            box = rng.uniform(K.lo, K.hi, size=(400, 2))
            samples = box[np.all(box @ A.T <= b, axis=1)][:30]
            verts = [linprog(-rng.normal(size=2), A_ub=A, b_ub=b, bounds=[(None, None)] * 2, method="highs").x
                     for _ in range(5)]
            samples = np.vstack([samples, verts])
            dist = lambda v: _linf_dist_halfspaces(A, b, v)
        for delta in (0.5, 0.25):
            Kd = polytope_approx(K, delta)
            missed += sum(not Kd.contains(p) for p in samples)
            for v in Kd.vertices:
                far = max(far, dist(v) - delta)
                checked += 1
    dt = time.perf_counter() - t0
    verdict("polytope approximation", missed == 0 and far <= 1e-9 and dt < 30,
            f"100 bodies x 2 deltas: {missed} sampled K-points outside K_delta, {checked} vertices, "
            f"max (dist - delta) = {far:.2e} (<= 0), {dt:.1f} s (< 30 s)")


def test_clustering_validity(verdict):
    t0 = time.perf_counter()
    bad, tight = 0, math.inf
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n, k = int(rng.integers(1, 4)), int(rng.integers(1, 13))
        T = build_clustering(rng.uniform(0, 1, size=(k, n)))
        c = validate_clustering(T)
        tight = min(tight, c * 2 * k)
        bad += c < 1 / (2 * k)
    C = 0.0
    for seed in range(50):
        rng = np.random.default_rng(10_000 + seed)
        n, m, k = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 9))
        S = PointSet(rng.uniform(0, 1, size=(k, n)))
        W = WhitneyField.from_derivatives(S, rng.normal(size=(k, 1, dim_poly(n, m - 1))), m)
        C = max(C, field_norm(W) / cluster_norm(build_clustering(S), W))
    dt = time.perf_counter() - t0
    verdict("clustering validity", bad == 0 and math.isfinite(C) and dt < 30,
            f"200 sets, {bad} below 1/(2|S|) (min c*2|S| = {tight:.3f}), "
            f"norm comparison C_meas = {C:.3f} over 50 fields (diam <= sqrt(3)), {dt:.1f} s (< 30 s)")


def test_whitney_extension(verdict):
    t0 = time.perf_counter()
    worst, C = 0.0, 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, m, k = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 6))
        S = PointSet(rng.uniform(0, 1, size=(k, n)))
        W = WhitneyField.from_derivatives(S, rng.normal(size=(k, 1, dim_poly(n, m - 1))), m)
        F = whitney_extend(W)
        d = S.distances()
        h = d[d > 0].min() / 16 if k > 1 else 0.05
        for i, x in enumerate(S.points):
            got = np.stack([_fd(F, x, a, h) for a in multi_indices(n, m - 1)], axis=-1)
            want = W.own_derivatives()[i]
            worst = max(worst, float(np.abs(got - want).max() / max(1.0, np.abs(want).max())))
        est = extension_norm_estimate(F, resolution=21 if n == 2 else 41)
        C = max(C, est.full / field_norm(W))
    dt = time.perf_counter() - t0
    verdict("Whitney extension", worst <= 1e-4 and dt < 300,
            f"50 fields, max relative FD jet error {worst:.1e} (<= 1e-4), "
            f"measured extension-norm constant {C:.2f}, {dt:.1f} s (< 300 s)")


def test_shape_field_convexity(verdict):
    t0 = time.perf_counter()
    rows, ok = [], True
    for seed, (n, m, D) in enumerate([(1, 1, 1), (1, 2, 2), (1, 3, 1), (2, 2, 1), (2, 3, 1)]):
        rng = np.random.default_rng(seed)
        pts = random_points(rng, 4, n)
        fams = ("box", "singleton", "halfspaces", "box")
        I = SelectionInstance(n, m, D, PointSet(pts), [random_constraint(rng, f, D, D) for f in fams])
        bound = leibniz_bound(n, m)
        rep = convexity_check(canonical_shape_field(I), bound, samples=1000, seed=seed)
        ok &= rep.passed and rep.samples == 1000 and rep.worst_constant <= bound + 1e-8
        rows.append(f"(n,m,D)=({n},{m},{D}) C_w={bound} worst={rep.worst_constant:.3f} "
                    f"failures={len(rep.failures)}")
    dt = time.perf_counter() - t0
    verdict("shape-field convexity", ok and dt < 120, "; ".join(rows) + f"; {dt:.1f} s (< 120 s)")


def test_gradient_trick(verdict):
    t0 = time.perf_counter()
    rt_bad, struct_bad, ratio = 0, 0, 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, m, D, k = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(2, 5))
        S = PointSet(rng.uniform(size=(k, n)))
        W = WhitneyField.from_derivatives(S, rng.normal(size=(k, D, dim_poly(n, m - 1))), m)
        xi_deg = _basis(n + D, m).exps[:, n:].sum(axis=1)
        for J, x in zip(W.jets, S.points):
            L = lift(J, x, m)
            rt_bad += not np.array_equal(project(L, x, m).coeff_matrix, J.coeff_matrix)
            struct_bad += bool(np.any(L.coeffs[xi_deg != 1] != 0.0))
        rep = lifted_seminorm_check(W)
        ratio = max(ratio, rep.ratio)
    dt = time.perf_counter() - t0
    verdict("gradient trick", rt_bad == 0 and struct_bad == 0 and math.isfinite(ratio) and dt < 10,
            f"{rt_bad} inexact round trips, {struct_bad} lifts with xi-degree != 1 terms, "
            f"max lifted/original seminorm {ratio:.6f} over 50 fields, {dt:.2f} s (< 10 s)")
