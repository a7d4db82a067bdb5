"""Selection norms over convex constraints: primal LP, dual chain, finiteness ratios."""
from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .convexlp import LPProblem, LPSolution, Polytope, lp_solve
from .dualred import DualField, DualFunctional, FiberFunction
from .polyjet import dim_poly
from .whitney import PointSet, WhitneyField, norm_functionals

FLAVORS = ("norm", "seminorm")
ZERO = 1e-12


def dim_jets(m: int, n: int, D: int) -> int:
    """``dim P-vec = D * C(n + m - 1, m - 1)``."""
    return D * math.comb(n + m - 1, m - 1)


def ksharp(m: int, n: int, D: int, max_dim: int = 62) -> int:
    """Finiteness constant ``2^{dim P-vec}``.

    Raises ``OverflowError`` past ``max_dim`` to keep callers from enumerating
    astronomically many subsets by accident; Python integers hold the exact
    value if requested with a larger ``max_dim``.
    """
    if m < 1 or n < 1 or D < 1:
        raise ValueError("m, n, D must be >= 1")
    d = dim_jets(m, n, D)
    if d > max_dim:
        raise OverflowError(f"dim P = {d} exceeds {max_dim}; 2^{d} subsets is not enumerable")
    return 2 ** d


@dataclass(frozen=True)
class SelectionInstance:
    """Points with one convex polytope constraint each.

    A constraint of dimension ``D`` restricts the value ``P(x)``; a
    constraint of dimension ``D * dim P`` restricts the full jet in the
    coordinates ``d^alpha P_j(x)`` (component-major).
    """

    n: int
    m: int
    D: int
    S: PointSet
    constraints: tuple
    flavor: str = "norm"
    kinds: Optional[tuple] = None  # generator family per point, for serialization
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.S, PointSet):
            object.__setattr__(self, "S", PointSet(self.S))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.flavor not in FLAVORS:
            raise ValueError(f"flavor must be one of {FLAVORS}")
        if self.S.n != self.n:
            raise ValueError("point dimension differs from n")
        if len(self.constraints) != len(self.S):
            raise ValueError("one constraint per point is required")
        N = dim_poly(self.n, self.m - 1)
        for i, K in enumerate(self.constraints):
            if K.dim not in (self.D, self.D * N):
                raise ValueError(f"constraint {i} has dimension {K.dim}; expected {self.D} or {self.D * N}")
        if self.check:
            bad = self.empty_constraints()
            if bad:
                raise InfeasibleError(bad)

    @property
    def N(self) -> int:
        return dim_poly(self.n, self.m - 1)

    @property
    def dimP(self) -> int:
        return self.D * self.N

    def empty_constraints(self) -> list[int]:
        return [i for i, K in enumerate(self.constraints) if K.is_empty()]

    def omega(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """``(Omega_x, c_x)`` acting on the jet coordinates of point ``i``."""
        K = self.constraints[i]
        if K.dim == self.dimP:
            return K.A, K.b
        Om = np.zeros((K.A.shape[0], self.dimP))
        Om[:, ::self.N] = K.A  # alpha = 0 slot of every component
        return Om, K.b

    def restrict(self, idx: Sequence[int]) -> "SelectionInstance":
        idx = list(idx)
        kinds = None if self.kinds is None else tuple(self.kinds[i] for i in idx)
        return SelectionInstance(self.n, self.m, self.D, self.S.subset(idx),
                                 tuple(self.constraints[i] for i in idx), self.flavor, kinds, check=False)

    def with_flavor(self, flavor: str) -> "SelectionInstance":
        return SelectionInstance(self.n, self.m, self.D, self.S, self.constraints, flavor, self.kinds, check=False)


class InfeasibleError(ValueError):
    def __init__(self, points: Sequence[int]):
        super().__init__(f"empty constraint at point(s) {list(points)}")
        self.points = list(points)


class NumericalError(RuntimeError):
    pass


@dataclass
class SelectionResult:
    value: float
    field: Optional[WhitneyField]
    dual_value: Optional[float] = None
    certificate: Optional[DualField] = None
    primal: Optional[LPSolution] = None
    dual: Optional[LPSolution] = None


def _ball_rows(I: SelectionInstance) -> tuple[np.ndarray, np.ndarray]:
    A, B = norm_functionals(I.S, I.m, I.D)
    if I.flavor == "seminorm":
        A = np.zeros((0, A.shape[1]))
    return A, B


def _stack_omega(I: SelectionInstance):
    blocks, rhs = [], []
    d = len(I.S) * I.dimP
    for i in range(len(I.S)):
        Om, c = I.omega(i)
        blk = np.zeros((Om.shape[0], d))
        blk[:, i * I.dimP:(i + 1) * I.dimP] = Om
        blocks.append(blk)
        rhs.append(c)
    return np.vstack(blocks), np.concatenate(rhs)


def selection_norm_primal(I: SelectionInstance) -> SelectionResult:
    """``min ||(P^x)||`` over jets with ``Omega_x P^x <= c_x``, as one LP.

    Variables are the jet coordinates ``v`` plus ``t1, t2 >= 0``; the norm
    is linearized as ``+-A v <= t1``, ``+-B v <= t2`` (no ``t1`` for the
    seminorm flavor).
    """
    A, B = _ball_rows(I)
    Om, c = _stack_omega(I)
    d = Om.shape[1]
    p, q = A.shape[0], B.shape[0]
    nv = d + 2
    rows = [
        np.hstack([A, -np.ones((p, 1)), np.zeros((p, 1))]),
        np.hstack([-A, -np.ones((p, 1)), np.zeros((p, 1))]),
        np.hstack([B, np.zeros((q, 1)), -np.ones((q, 1))]),
        np.hstack([-B, np.zeros((q, 1)), -np.ones((q, 1))]),
        np.hstack([Om, np.zeros((Om.shape[0], 2))]),
    ]
    rhs = np.concatenate([np.zeros(2 * p + 2 * q), c])
    obj = np.zeros(nv)
    obj[d] = 1.0 if I.flavor == "norm" else 0.0
    obj[d + 1] = 1.0
    var_kinds = ("free",) * d + ("nonneg", "nonneg")
    sol = lp_solve(LPProblem(obj, np.vstack(rows), rhs, ("<=",) * len(rhs), var_kinds, "min"))
    if sol.status == "infeasible":
        raise InfeasibleError(I.empty_constraints() or list(range(len(I.S))))
    if not sol.optimal:
        raise NumericalError(f"primal selection LP ended with status {sol.status}")
    v = sol.x[:d]
    W = WhitneyField.from_derivatives(I.S, v.reshape(len(I.S), I.D, I.N), I.m)
    return SelectionResult(float(sol.value), W, primal=sol)


def _dual_lp(I: SelectionInstance, ball_eq: Optional[np.ndarray] = None, ball_L: Optional[np.ndarray] = None):
    """``sup sum -c_x . z_x`` over ``z >= 0`` with ``-Omega^T z`` in the dual unit ball.

    The ball is either the exact lifted form ``{A^T mu + B^T nu : |mu|_1, |nu|_1 <= 1}``
    (default) or a halfspace polytope ``{xi : L xi <= 1}`` given by ``ball_L``.
    """
    Om, c = _stack_omega(I)
    d = Om.shape[1]
    r = Om.shape[0]
    if ball_L is not None:
        L = np.asarray(ball_L, dtype=float)
        G = -L @ Om.T
        return lp_solve(LPProblem(-c, G, np.ones(L.shape[0]), ("<=",) * L.shape[0], ("nonneg",) * r, "max")), r
    A, B = _ball_rows(I)
    p, q = A.shape[0], B.shape[0]
    nv = 2 * p + 2 * q + r
    # A^T mu + B^T nu + Omega^T z = 0
    eq = np.hstack([A.T, -A.T, B.T, -B.T, Om.T])
    rows = [eq]
    rhs = [np.zeros(d)]
    kinds = ["="] * d
    if p:
        row = np.zeros((1, nv)); row[0, :2 * p] = 1.0
        rows.append(row); rhs.append(np.ones(1)); kinds.append("<=")
    if q:
        row = np.zeros((1, nv)); row[0, 2 * p:2 * p + 2 * q] = 1.0
        rows.append(row); rhs.append(np.ones(1)); kinds.append("<=")
    obj = np.concatenate([np.zeros(2 * p + 2 * q), -c])
    sol = lp_solve(LPProblem(obj, np.vstack(rows), np.concatenate(rhs), tuple(kinds), ("nonneg",) * nv, "max"))
    return sol, r


def selection_norm_dual(I: SelectionInstance) -> SelectionResult:
    """Dual chain value ``sup_z sum_x -c_x . z_x``; the certificate is ``xi_x = -Omega_x^T z_x``."""
    sol, r = _dual_lp(I)
    if sol.status == "unbounded":
        raise InfeasibleError(I.empty_constraints() or list(range(len(I.S))))
    if not sol.optimal:
        raise NumericalError(f"dual selection LP ended with status {sol.status}")
    z = sol.x[-r:]
    Om, _ = _stack_omega(I)
    xi = -Om.T @ z
    cert = DualField.from_vector(I.S, xi, I.m, I.D)
    return SelectionResult(float(sol.value), None, float(sol.value), cert, dual=sol)


def selection_norm_dual_polytope(I: SelectionInstance, L: np.ndarray) -> float:
    """Dual chain with the unit ball of the dual space replaced by ``{xi : L xi <= 1}``."""
    sol, _ = _dual_lp(I, ball_L=L)
    if not sol.optimal:
        raise NumericalError(f"dual selection LP ended with status {sol.status}")
    return float(sol.value)


def dual_ball_generators(I: SelectionInstance) -> np.ndarray:
    """Points whose convex hull is the dual unit ball: ``+-a_i +- b_k`` (or ``+-b_k``)."""
    A, B = _ball_rows(I)
    Bs = np.vstack([B, -B])
    if A.shape[0] == 0:
        return Bs
    As = np.vstack([A, -A])
    return (As[:, None, :] + Bs[None, :, :]).reshape(-1, A.shape[1])


def selection_norm(I: SelectionInstance) -> SelectionResult:
    """Primal solve plus dual certificate."""
    res = selection_norm_primal(I)
    d = selection_norm_dual(I)
    res.dual_value, res.certificate, res.dual = d.dual_value, d.certificate, d.dual
    return res


# --- fiber function ----------------------------------------------------------


def fiber_value(I: SelectionInstance, i: int, xi: DualFunctional) -> float:
    """``f_x(xi) = sup{-c_x . z : z >= 0, -Omega_x^T z = xi}`` (``-inf`` if infeasible)."""
    Om, c = I.omega(i)
    xi = xi.rebase(I.S.points[i]).coeffs.ravel()
    r = Om.shape[0]
    if r == 0:
        return 0.0 if not np.any(xi) else -np.inf
    sol = lp_solve(LPProblem(-c, -Om.T, xi, ("=",) * Om.shape[1], ("nonneg",) * r, "max"))
    if sol.status == "infeasible":
        return -np.inf
    if sol.status == "unbounded":
        return np.inf
    if not sol.optimal:
        raise NumericalError(f"fiber LP ended with status {sol.status}")
    return float(sol.value)


def fiber_function(I: SelectionInstance) -> FiberFunction:
    return FiberFunction(lambda i, f: fiber_value(I, i, f), "selection")


# --- seminorm functionals -----------------------------------------------------


@dataclass(frozen=True)
class SeminormBasis:
    labels: tuple  # (alpha, y index, z index, j)
    matrix: np.ndarray  # rows in jet coordinates

    def __len__(self):
        return len(self.labels)

    def functional(self, r: int, S: PointSet, m: int, D: int) -> DualField:
        return DualField.from_vector(S, self.matrix[r], m, D)


def seminorm_dual_space(S: PointSet, m: int, D: int = 1) -> SeminormBasis:
    """Spanning functionals ``d^alpha (P^y_j - P^z_j)(y) / |y - z|^{m - |alpha|}``, ordered pairs."""
    from .polyjet import multi_indices

    if len(S) < 2:
        raise ValueError("need at least two points")
    _, B = norm_functionals(S, m, D, ordered=True)
    alphas = multi_indices(S.n, m - 1)
    labels = tuple((a, y, z, j) for y in range(len(S)) for z in range(len(S)) if y != z
                   for j in range(D) for a in alphas)
    return SeminormBasis(labels, B)


def seminorm_via_dual(W: WhitneyField, ball: str = "seminorm") -> float:
    """``sup xi(W)`` over ``xi`` in the span of the pair functionals with unit dual norm.

    ``ball="seminorm"`` uses the dual of the seminorm on that span
    (``{B^T nu : |nu|_1 <= 1}``); ``ball="norm"`` intersects the span with
    the unit ball dual to the full norm.
    """
    A, B = norm_functionals(W.base, W.m, W.D, ordered=True)
    v = W.own_derivatives().ravel()
    q = B.shape[0]
    if q == 0:
        return 0.0
    if ball == "seminorm":
        return float(np.abs(B @ v).max())
    # xi = A^T mu + B^T nu = B^T lam (in the span); maximize xi . v
    p = A.shape[0]
    d = A.shape[1]
    nv = 2 * p + 2 * q + q
    eq = np.hstack([A.T, -A.T, B.T, -B.T, -B.T])
    rows = [eq, np.zeros((1, nv)), np.zeros((1, nv))]
    rows[1][0, :2 * p] = 1.0
    rows[2][0, 2 * p:2 * p + 2 * q] = 1.0
    obj = np.concatenate([np.zeros(2 * p + 2 * q), B @ v])
    kinds = ("=",) * d + ("<=", "<=")
    var_kinds = ("nonneg",) * (2 * p + 2 * q) + ("free",) * q
    sol = lp_solve(LPProblem(obj, np.vstack(rows), np.concatenate([np.zeros(d), [1.0, 1.0]]), kinds, var_kinds, "max"))
    if not sol.optimal:
        raise NumericalError(f"seminorm LP ended with status {sol.status}")
    return float(sol.value)


# --- finiteness ratio -----------------------------------------------------------


def _value(I: SelectionInstance) -> float:
    return selection_norm_primal(I).value


def _subset_value(args) -> tuple[int, float, float]:
    I, mask, idx = args
    t0 = time.perf_counter()
    v = _value(I.restrict(idx))
    return mask, v, (time.perf_counter() - t0) * 1000.0


@dataclass
class SubsetRow:
    mask: int
    value: float
    ms: float


@dataclass
class RatioResult:
    ratio: float
    subset: tuple  # indices of the maximizing subset
    value_full: float
    value_best: float
    k: int
    rows: list = field(default_factory=list)  # SubsetRow per evaluated subset, sorted by mask
    pruned: bool = False

    @property
    def mask(self) -> int:
        return sum(1 << i for i in self.subset)


def _ratio(num: float, den: float) -> float:
    if num <= ZERO and den <= ZERO:
        return 1.0
    if den <= ZERO:
        return math.inf
    return num / den


def finiteness_ratio(I: SelectionInstance, k: int, parallel: int = 1, chunk: int = 64,
                     prune: bool = True) -> RatioResult:
    """``value(S) / max_{|S'| <= k} value(S')`` with the maximizing subset.

    By restriction monotonicity only subsets of size ``min(k, |S|)`` are
    enumerated, in increasing bitmask order and in fixed-size chunks; with
    ``prune`` the sweep stops after the first chunk that reaches the full
    value.  Output does not depend on ``parallel``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    s = len(I.S)
    full = _value(I)
    if s <= k:
        idx = tuple(range(s))
        return RatioResult(1.0, idx, full, full, k, [SubsetRow((1 << s) - 1, full, 0.0)])
    combos = sorted(itertools.combinations(range(s), k), key=lambda c: sum(1 << i for i in c))
    rows: list[SubsetRow] = []
    best, best_idx = -math.inf, None
    pruned = False
    pool = ProcessPoolExecutor(parallel) if parallel > 1 else None
    try:
        for start in range(0, len(combos), chunk):
            part = combos[start:start + chunk]
            jobs = [(I, sum(1 << i for i in c), c) for c in part]
            out = list(pool.map(_subset_value, jobs)) if pool else [_subset_value(j) for j in jobs]
            for (mask, v, ms), c in zip(out, part):
                rows.append(SubsetRow(mask, v, ms))
                if v > best:
                    best, best_idx = v, c
            if prune and best >= full * (1.0 - 1e-9) and start + chunk < len(combos):
                pruned = True
                break
    finally:
        if pool:
            pool.shutdown()
    return RatioResult(_ratio(full, best), tuple(best_idx), full, best, k, rows, pruned)


# --- generators -------------------------------------------------------------------

FAMILIES = ("singleton", "box", "halfspaces")


def random_points(rng: np.random.Generator, count: int, n: int, min_sep: float = 1e-3) -> np.ndarray:
    """Uniform points in the unit cube with pairwise distance >= ``min_sep``."""
    pts: list[np.ndarray] = []
    while len(pts) < count:
        p = rng.uniform(0.0, 1.0, n)
        if all(np.linalg.norm(p - q) >= min_sep for q in pts):
            pts.append(p)
    return np.array(pts)


def random_constraint(rng: np.random.Generator, family: str, D: int, dimP: int) -> Polytope:
    if family == "singleton":
        return Polytope.point(rng.uniform(-1.0, 1.0, D))
    if family == "box":
        c = rng.uniform(-1.0, 1.0, D)
        h = rng.uniform(0.05, 0.5, D)
        return Polytope.box(c - h, c + h)
    if family == "halfspaces":
        v0 = rng.uniform(-1.0, 1.0, dimP)
        r = int(rng.integers(5, 13))
        A = rng.normal(size=(r, dimP))
        A /= np.linalg.norm(A, axis=1, keepdims=True)
        b = A @ v0 + rng.uniform(0.1, 1.0, r)
        return Polytope(A, b)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def random_instance(rng: np.random.Generator, family: str, n: int, m: int, D: int, size: int,
                    flavor: str = "norm") -> SelectionInstance:
    pts = random_points(rng, size, n)
    dimP = D * dim_poly(n, m - 1)
    cons = tuple(random_constraint(rng, family, D, dimP) for _ in range(size))
    return SelectionInstance(n, m, D, PointSet(pts), cons, flavor, (family,) * size)
