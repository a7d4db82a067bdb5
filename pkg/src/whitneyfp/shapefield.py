"""Shape fields, their quantitative convexity, and the gradient-trick lift.

A shape field assigns to every base point ``x`` and scale ``M > 0`` a convex
set of vector jets.  Sets are polytopes in derivative coordinates
``v[j * N + a] = d^alpha P_j (x)`` (component-major, graded ``alpha``), the
same layout the selection constraints use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .convexlp import Polytope
from .polyjet import LiftedPoly, Poly, VecPoly, _basis, dim_poly, jet_mul, shift_matrix, trunc_mul
from .selection import SelectionInstance
from .whitney import PointSet, WhitneyField, field_seminorm

DELTA_MAX = 1.0
DELTA_MIN = 1e-3
M_RANGE = (1e-2, 1e2)
MARGIN_TOL = 1e-8


# --- jet arithmetic in derivative coordinates --------------------------------


def jet_product(a: np.ndarray, b: np.ndarray, n: int, deg: int) -> np.ndarray:
    """Derivatives at ``x`` of ``A (.)_x B`` from those of ``A`` and ``B`` (broadcasts)."""
    fact = _basis(n, deg).fact
    return trunc_mul(np.asarray(a) / fact, np.asarray(b) / fact, n, deg) * fact


def partition_partner(q1: np.ndarray, n: int, deg: int) -> np.ndarray:
    """Derivatives of the ``Q2`` with ``Q1 (.) Q1 + Q2 (.) Q2 = 1`` and ``Q2(x) > 0``.

    The identity is triangular in the graded coefficients, so ``Q2`` is
    found by fixed-point sweeps that settle one order per pass.
    """
    fact = _basis(n, deg).fact
    t1 = np.asarray(q1, dtype=float) / fact
    if not abs(t1[0]) < 1.0:
        raise ValueError("|Q1(x)| must be < 1")
    rest = -trunc_mul(t1, t1, n, deg)
    rest[0] += 1.0
    s = math.sqrt(rest[0])
    h = np.zeros_like(t1)
    for _ in range(deg):
        hh = trunc_mul(h, h, n, deg)
        h = (rest - hh) / (2.0 * s)
        h[0] = 0.0
    h[0] = s
    return h * fact


def combine(P1: np.ndarray, P2: np.ndarray, q1: np.ndarray, q2: np.ndarray, n: int, deg: int) -> np.ndarray:
    """``sum_i (Q_i (.) Q_i) (.) P_i`` with ``P_i`` given as ``(D, N)`` derivative arrays."""
    w1 = jet_product(q1, q1, n, deg)
    w2 = jet_product(q2, q2, n, deg)
    return jet_product(w1[None, :], P1, n, deg) + jet_product(w2[None, :], P2, n, deg)


def leibniz_bound(n: int, m: int) -> int:
    """``max_|alpha|<=m-1  sum_{beta<=alpha, gamma<=beta} C(alpha,beta) C(beta,gamma)``.

    This is the constant the product rule gives for the canonical field
    (with ``delta <= 1``); it equals ``3^(m-1)``.
    """
    b = _basis(n, m - 1)
    best = 0
    for ia in range(b.size):
        total = 0
        for ib in np.flatnonzero(b.le[:, ia]):
            for ig in np.flatnonzero(b.le[:, ib]):
                total += round(b.binom[ib, ia] * b.binom[ig, ib])
        best = max(best, int(total))
    return best


# --- shape fields ----------------------------------------------------------


class ShapeField:
    """``Gamma(x_i, M)`` given by a polytope builder ``(i, M) -> Polytope``."""

    def __init__(self, base: PointSet, m: int, D: int, builder: Callable[[int, float], Polytope],
                 monotone: bool = True):
        self.base = base if isinstance(base, PointSet) else PointSet(base)
        self.m = m
        self.D = D
        self.monotone = monotone
        self._builder = builder

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def N(self) -> int:
        return dim_poly(self.n, self.m - 1)

    @property
    def dimP(self) -> int:
        return self.D * self.N

    def gamma(self, i: int, M: float) -> Polytope:
        if not M > 0:
            raise ValueError("M must be positive")
        return self._builder(i, float(M))

    def violation(self, i: int, M: float, v) -> float:
        """Largest violated row of ``Gamma(x_i, M)``, relative to ``1 + |b|``."""
        G = self.gamma(i, M)
        if G.A.shape[0] == 0:
            return -np.inf
        r = (G.A @ np.asarray(v, dtype=float).reshape(-1) - G.b) / (1.0 + np.abs(G.b))
        return float(r.max())

    def contains(self, i: int, M: float, v, tol: float = MARGIN_TOL) -> bool:
        return self.violation(i, M, v) <= tol

    def scale_needed(self, i: int, v, M: float, hi: float = 1e12) -> float:
        """Smallest ``c`` with ``v`` in ``Gamma(x_i, c M)`` (bisection; inf if none)."""
        if not self.contains(i, hi * M, v):
            return math.inf
        lo_c, hi_c = 0.0, hi
        for _ in range(200):
            mid = 0.5 * (lo_c + hi_c)
            if mid > 0 and self.contains(i, mid * M, v):
                hi_c = mid
            else:
                lo_c = mid
            if hi_c - lo_c <= 1e-12 * hi_c:
                break
        return hi_c

    def check_monotone(self, pairs: int = 20, seed: int = 0) -> bool:
        """Sampled ``Gamma(x, M') subset Gamma(x, M)`` for ``M' <= M`` via implication LPs."""
        rng = np.random.default_rng(seed)
        lo, hi = np.log(M_RANGE[0]), np.log(M_RANGE[1])
        for _ in range(pairs):
            i = int(rng.integers(len(self.base)))
            a, b = np.sort(np.exp(rng.uniform(lo, hi, 2)))
            if not self.gamma(i, a).subset_of(self.gamma(i, b)):
                return False
        return True


class CanonicalShapeField(ShapeField):
    """``{P : |d^alpha P_j(x)| <= M for |alpha| <= m-1, P in K(x)}``."""

    def __init__(self, instance: SelectionInstance):
        self.instance = instance
        self._K = [instance.omega(i) for i in range(len(instance.S))]
        super().__init__(instance.S, instance.m, instance.D, self._build, monotone=True)

    def _build(self, i: int, M: float) -> Polytope:
        d = self.dimP
        Om, c = self._K[i]
        A = np.vstack([np.eye(d), -np.eye(d), Om])
        b = np.concatenate([np.full(2 * d, M), c])
        return Polytope(A, b)

    def constraint_violation(self, i: int, v) -> float:
        Om, c = self._K[i]
        if Om.shape[0] == 0:
            return -np.inf
        return float(((Om @ np.asarray(v, dtype=float).reshape(-1) - c) / (1.0 + np.abs(c))).max())

    def scale_needed(self, i: int, v, M: float, hi: float = 1e12) -> float:
        if self.constraint_violation(i, v) > MARGIN_TOL:
            return math.inf
        return float(np.abs(np.asarray(v, dtype=float)).max() / M)


def canonical_shape_field(I: SelectionInstance) -> CanonicalShapeField:
    return CanonicalShapeField(I)


# --- convexity check ---------------------------------------------------------


@dataclass
class ConvexityWitness:
    delta: float
    point: int
    M: float
    P1: np.ndarray
    P2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    P: np.ndarray
    violation: float
    lifted: bool = False

    def to_dict(self) -> dict:
        return {"delta": self.delta, "point": self.point, "M": self.M, "violation": self.violation,
                "lifted": self.lifted, "P1": self.P1.tolist(), "P2": self.P2.tolist(),
                "Q1": self.Q1.tolist(), "Q2": self.Q2.tolist(), "P": self.P.tolist()}


@dataclass
class ConvexityReport:
    samples: int
    C_w: float
    delta_max: float
    worst_constant: float
    rejected: int = 0
    empty_scales: int = 0
    lifted_checked: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and self.samples > 0

    def to_dict(self) -> dict:
        return {"samples": self.samples, "C_w": self.C_w, "delta_max": self.delta_max,
                "worst_constant": self.worst_constant, "rejected": self.rejected,
                "empty_scales": self.empty_scales, "lifted_checked": self.lifted_checked,
                "passed": self.passed, "failures": [f.to_dict() for f in self.failures]}


def _random_member(G: Polytope, rng: np.random.Generator) -> Optional[np.ndarray]:
    """A random point of ``G``: a vertex or a random mix of vertices and a feasible point."""
    base = G.feasible_point()
    if base is None:
        return None
    pts = [base]
    for _ in range(3):
        sol = G.maximize(rng.normal(size=G.dim))
        if sol.optimal:
            pts.append(sol.x)
    pts = np.array(pts)
    if rng.random() < 0.3:
        return pts[int(rng.integers(len(pts)))]
    return rng.dirichlet(np.ones(len(pts))) @ pts


def _ray_limit(G: Polytope, p: np.ndarray, d: np.ndarray) -> float:
    """Largest ``s`` in [0, 1] with ``p + s d`` in ``G`` (``p`` assumed inside)."""
    Ad = G.A @ d
    slack = np.maximum(G.b - G.A @ p, 0.0)
    hit = Ad > 1e-15
    if not hit.any():
        return 1.0
    return float(min(1.0, (slack[hit] / Ad[hit]).min()))


def _signed_unit(rng: np.random.Generator, size: int) -> np.ndarray:
    u = rng.uniform(-1.0, 1.0, size)
    ext = rng.random(size) < 0.5
    return np.where(ext, np.sign(u), u)


def _sample_q(rng: np.random.Generator, n: int, deg: int, delta: float, tries: int = 50):
    b = _basis(n, deg)
    cap = delta ** (-b.orders.astype(float))
    for _ in range(tries):
        theta = rng.uniform(0.0, 0.5 * math.pi)
        rho = rng.uniform(0.0, 1.0)
        q1 = rho * _signed_unit(rng, b.size) * cap
        q1[0] = math.cos(theta)
        if abs(q1[0]) >= 1.0:
            continue
        q2 = partition_partner(q1, n, deg)
        if np.all(np.abs(q2) <= cap * (1.0 + 1e-12)):
            return q1, q2
    return None


def convexity_check(G: ShapeField, C_w: float, delta_max: float = DELTA_MAX, samples: int = 1000,
                    seed: int = 0, lifted: bool = False, max_failures: int = 20) -> ConvexityReport:
    """Sample the hypotheses of quantitative convexity and test the conclusion.

    Each sample draws ``delta`` and ``M`` log-uniformly, a base point, jets
    ``P1, P2`` in ``Gamma(x, M)`` that are ``M delta^(m-|alpha|)``-close,
    and a partition pair ``Q1, Q2``; the combination must lie in
    ``Gamma(x, C_w M)``.  Sample ``s`` uses its own stream ``(seed, s)``.
    With ``lifted=True`` the same configuration is also pushed through the
    gradient-trick lift and tested against the lifted field.
    """
    if not G.monotone:
        raise ValueError("convexity_check expects a monotone shape field")
    if not 0 < delta_max:
        raise ValueError("delta_max must be positive")
    n, m, D, N = G.n, G.m, G.D, G.N
    deg = m - 1
    orders = _basis(n, deg).orders.astype(float)
    report = ConvexityReport(0, C_w, delta_max, 0.0)
    lo_d, hi_d = np.log(min(DELTA_MIN, delta_max)), np.log(delta_max)
    lo_m, hi_m = np.log(M_RANGE[0]), np.log(M_RANGE[1])
    s = 0
    while report.samples < samples and s < 20 * samples:
        rng = np.random.default_rng([seed, s])
        s += 1
        delta = float(np.exp(rng.uniform(lo_d, hi_d)))
        M = float(np.exp(rng.uniform(lo_m, hi_m)))
        i = int(rng.integers(len(G.base)))
        poly = G.gamma(i, M)
        P1 = _random_member(poly, rng)
        if P1 is None:
            report.empty_scales += 1
            continue
        step = np.tile(M * delta ** (m - orders), D) * _signed_unit(rng, D * N)
        if rng.random() < 0.5:
            step = -np.sign(P1) * np.abs(step)
        P2 = P1 + _ray_limit(poly, P1, step) * step
        q = _sample_q(rng, n, deg, delta)
        if q is None:
            report.rejected += 1
            continue
        q1, q2 = q
        P = combine(P1.reshape(D, N), P2.reshape(D, N), q1, q2, n, deg).reshape(-1)
        report.samples += 1
        report.worst_constant = max(report.worst_constant, G.scale_needed(i, P, M))
        viol = G.violation(i, C_w * M, P)
        if viol > MARGIN_TOL and len(report.failures) < max_failures:
            report.failures.append(ConvexityWitness(delta, i, M, P1, P2, q1, q2, P, viol))
        if lifted:
            report.lifted_checked += 1
            Pl = _lifted_combination(G.base[i], P1.reshape(D, N), P2.reshape(D, N), q1, q2, m)
            lv = lifted_violation(G, i, C_w * M, Pl)
            if lv > MARGIN_TOL and len(report.failures) < max_failures:
                report.failures.append(ConvexityWitness(delta, i, M, P1, P2, q1, q2, P, lv, lifted=True))
    return report


# --- gradient trick ----------------------------------------------------------


def _lift_index(n: int, D: int, m: int) -> np.ndarray:
    """``idx[j, a]``: position of ``x^alpha xi_j`` in the degree-m basis of R^(n+D)."""
    small = _basis(n, m - 1).exps_t
    big = _basis(n + D, m).index
    out = np.empty((D, len(small)), dtype=np.int64)
    for j in range(D):
        e = [0] * D
        e[j] = 1
        for a, alpha in enumerate(small):
            out[j, a] = big[tuple(alpha) + tuple(e)]
    return out


def lift(P: VecPoly, x0=None, m: Optional[int] = None) -> LiftedPoly:
    """``(x, xi) -> sum_j xi_j P_j(x)`` as a degree-``m`` polynomial on R^(n+D).

    The lift is the same for every base point; ``x0`` is only checked.
    """
    if x0 is not None and np.asarray(x0, dtype=float).reshape(-1).size != P.n:
        raise ValueError("base point dimension differs from the polynomial's")
    m = P.degree_bound + 1 if m is None else m
    if P.degree_bound > m - 1:
        raise ValueError(f"degree {P.degree_bound} does not fit a degree-{m} lift")
    Pm = P if P.degree_bound == m - 1 else VecPoly([c.raised(m - 1) for c in P.components])
    n, D = P.n, P.D
    coeffs = np.zeros(_basis(n + D, m).size)
    coeffs[_lift_index(n, D, m)] = Pm.coeff_matrix
    return LiftedPoly(n + D, m, coeffs)


def project(P: Poly, x0, m: Optional[int] = None) -> VecPoly:
    """``x -> grad_xi P(x, 0)`` as a vector jet of degree ``m - 1`` at ``x0``.

    ``n`` is read off ``x0``; ``D = P.n - n``.  When ``P`` has degree above
    ``m`` the gradient is truncated to its Taylor jet at ``x0``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n = x0.size
    D = P.n - n
    if D < 1:
        raise ValueError("lifted polynomial must have more variables than the base point")
    d = P.degree_bound
    m = d if m is None else m
    if d < 1:
        return VecPoly.zeros(n, max(m - 1, 0), D)
    idx = _lift_index(n, D, d)
    G = P.coeffs[idx]  # (D, dim_poly(n, d-1))
    if d - 1 > m - 1:
        Nm = dim_poly(n, m - 1)
        centered = (G @ shift_matrix(n, d - 1, x0).T)[:, :Nm]
        return VecPoly([Poly.from_centered(n, m - 1, c, x0) for c in centered])
    out = VecPoly.from_matrix(n, d - 1, G)
    if d - 1 < m - 1:
        out = VecPoly([c.raised(m - 1) for c in out.components])
    return out


def jet(P: Poly, z, deg: int) -> Poly:
    """Degree-``deg`` Taylor jet of ``P`` at ``z``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    N = dim_poly(P.n, deg)
    if deg == P.degree_bound:
        return P
    if deg > P.degree_bound:
        return type(P)(P.n, deg, P.raised(deg).coeffs)
    centered = P.centered(z)[:N]
    return type(P).from_centered(P.n, deg, centered, z)


def lifted_violation(G: ShapeField, i: int, M: float, P: Poly) -> float:
    """Membership defect of ``P`` in ``{P(x,0) = 0, grad_xi P(x,0) in Gamma(x_i, M)}``.

    Returns ``inf`` if ``P(., 0)`` is not identically zero.
    """
    x = G.base[i]
    n = G.n
    b = _basis(P.n, P.degree_bound)
    pure_x = np.all(b.exps[:, n:] == 0, axis=1)
    if np.any(P.coeffs[pure_x] != 0.0):
        return math.inf
    g = project(P, x, G.m).derivatives_at(x).reshape(-1)
    return G.violation(i, M, g)


def _lifted_combination(x, P1: np.ndarray, P2: np.ndarray, q1: np.ndarray, q2: np.ndarray, m: int) -> Poly:
    n = x.size
    D = P1.shape[0]
    z = np.concatenate([x, np.zeros(D)])
    lifts = [lift(VecPoly.from_derivatives(n, m - 1, Pk, x), x, m) for Pk in (P1, P2)]
    out = None
    for qk, Pk in zip((q1, q2), lifts):
        Q = _lift_scalar(Poly.from_derivatives(n, m - 1, qk, x), D, m)
        term = jet_mul(jet_mul(Q, Q, z), Pk, z)
        out = term if out is None else out + term
    return out


def _lift_scalar(Q: Poly, D: int, m: int) -> LiftedPoly:
    """``Q`` viewed on R^(n+D), constant in ``xi``."""
    n = Q.n
    big = _basis(n + D, m).index
    coeffs = np.zeros(_basis(n + D, m).size)
    for a, alpha in enumerate(_basis(n, Q.degree_bound).exps_t):
        coeffs[big[tuple(alpha) + (0,) * D]] = Q.coeffs[a]
    return LiftedPoly(n + D, m, coeffs)


@dataclass
class LiftedSeminormReport:
    original: float
    lifted: float
    ratio: float

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.ratio)


def lift_field(W: WhitneyField) -> WhitneyField:
    """Order-``m+1`` scalar field on ``S x {0}`` made of the lifted jets."""
    D = W.D
    pts = np.hstack([W.base.points, np.zeros((len(W), D))])
    jets = [VecPoly([lift(J, x, W.m)]) for J, x in zip(W.jets, W.base.points)]
    return WhitneyField(PointSet(pts), jets, W.m + 1)


def lifted_seminorm_check(W: WhitneyField) -> LiftedSeminormReport:
    orig = field_seminorm(W)
    lifted = field_seminorm(lift_field(W))
    if orig == 0.0:
        ratio = 1.0 if lifted == 0.0 else math.inf
    else:
        ratio = lifted / orig
    return LiftedSeminormReport(orig, lifted, ratio)
