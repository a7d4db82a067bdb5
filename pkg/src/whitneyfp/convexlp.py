"""Dense linear programming, halfspace polytopes and polytope approximation.

The solver is a two-phase tableau simplex with Dantzig pricing and a Bland
fallback on degenerate stalls.  The pivoting loop itself lives in
:mod:`whitneyfp.kernels` (compiled when available).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import kernels

PIVOT_TOL = 1e-10
MAX_PIVOTS = 50_000
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class LPProblem:
    """``sense`` of ``c @ x`` subject to ``A x (row_kinds) b``.

    ``row_kinds`` entries are ``"<="``, ``"="`` or ``">="``; ``var_kinds``
    entries are ``"free"`` or ``"nonneg"``.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    row_kinds: tuple = ()
    var_kinds: tuple = ()
    sense: str = "max"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        p = c.size
        A = np.asarray(self.A, dtype=float)
        A = A.reshape(-1, p) if A.size else np.zeros((0, p))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        rk = tuple(self.row_kinds) or ("<=",) * b.size
        vk = tuple(self.var_kinds) or ("free",) * p
        if len(rk) != b.size or len(vk) != p:
            raise ValueError("row_kinds/var_kinds length mismatch")
        if set(rk) - {"<=", "=", ">="}:
            raise ValueError(f"bad row kind in {rk}")
        if set(vk) - {"free", "nonneg"}:
            raise ValueError(f"bad variable kind in {vk}")
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("LP data must be finite")
        for name, val in (("c", c), ("A", A), ("b", b), ("row_kinds", rk), ("var_kinds", vk)):
            object.__setattr__(self, name, val)


@dataclass
class LPSolution:
    status: str
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    value: float = float("nan")
    dual_value: float = float("nan")
    pivots: int = 0
    primal_infeasibility: float = float("nan")
    dual_infeasibility: float = float("nan")

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def gap(self) -> float:
        return abs(self.value - self.dual_value)


def _primal_violation(P: LPProblem, x: np.ndarray) -> float:
    r = P.A @ x - P.b
    v = 0.0
    for kind, ri in zip(P.row_kinds, r):
        if kind == "<=":
            v = max(v, ri)
        elif kind == ">=":
            v = max(v, -ri)
        else:
            v = max(v, abs(ri))
    for kind, xi in zip(P.var_kinds, x):
        if kind == "nonneg":
            v = max(v, -xi)
    return float(v)


def _dual_violation(P: LPProblem, y: np.ndarray) -> float:
    # y_i is the sensitivity of the optimum to b_i
    s = 1.0 if P.sense == "max" else -1.0
    v = 0.0
    for kind, yi in zip(P.row_kinds, y):
        if kind == "<=":
            v = max(v, -s * yi)
        elif kind == ">=":
            v = max(v, s * yi)
    red = P.A.T @ y - P.c
    for kind, ri in zip(P.var_kinds, red):
        v = max(v, abs(ri) if kind == "free" else -s * ri)
    return float(v)


def lp_solve(problem: LPProblem, tol: float = PIVOT_TOL, max_pivots: int = MAX_PIVOTS) -> LPSolution:
    """Solve ``problem``; on optimality return primal ``x`` and dual ``y``.

    ``y`` holds the multipliers with ``value == b @ y`` at optimality: for a
    maximization with ``<=`` rows, ``y >= 0`` and ``A.T @ y == c`` on free
    variables (``>= c`` on nonnegative ones).
    """
    P = problem
    q, p = P.A.shape
    cost = -P.c if P.sense == "max" else P.c.copy()
    # row equilibration; duals are unscaled at the end
    rscale = np.abs(P.A).max(axis=1) if p else np.ones(q)
    rscale = np.where(rscale > 0, rscale, 1.0)
    A_in = P.A / rscale[:, None]
    b_in = P.b / rscale

    # structural columns: free variables split into a +/- pair
    cols, col_var, col_sign = [], [], []
    for j, kind in enumerate(P.var_kinds):
        cols.append(A_in[:, j])
        col_var.append(j)
        col_sign.append(1.0)
        if kind == "free":
            cols.append(-A_in[:, j])
            col_var.append(j)
            col_sign.append(-1.0)
    n_struct = len(cols)
    c_struct = np.array([cost[v] * s for v, s in zip(col_var, col_sign)])

    if q == 0:
        if np.any(c_struct < -tol):
            return LPSolution("unbounded")
        x = np.zeros(p)
        return LPSolution("optimal", x, np.zeros(0), 0.0, 0.0, 0, 0.0, _dual_violation(P, np.zeros(0)))

    M = np.column_stack(cols) if cols else np.zeros((q, 0))
    slack_rows = [i for i, k in enumerate(P.row_kinds) if k != "="]
    S = np.zeros((q, len(slack_rows)))
    for k, i in enumerate(slack_rows):
        S[i, k] = 1.0 if P.row_kinds[i] == "<=" else -1.0
    A_std = np.hstack([M, S])
    b_std = b_in.copy()
    sign = np.where(b_std < 0, -1.0, 1.0)
    A_std *= sign[:, None]
    b_std *= sign
    n_real = A_std.shape[1]
    c_std = np.concatenate([c_struct, np.zeros(len(slack_rows))])

    # initial basis: a +1 slack where available, an artificial otherwise
    basis = np.full(q, -1, dtype=np.intp)
    for k, i in enumerate(slack_rows):
        if A_std[i, n_struct + k] == 1.0:
            basis[i] = n_struct + k
    art_rows = np.flatnonzero(basis < 0)
    n_art = art_rows.size
    Art = np.zeros((q, n_art))
    for k, i in enumerate(art_rows):
        Art[i, k] = 1.0
        basis[i] = n_real + k

    T = np.zeros((q + 1, n_real + n_art + 1))
    T[:q, :n_real] = A_std
    T[:q, n_real:n_real + n_art] = Art
    T[:q, -1] = b_std

    pivots = 0
    if n_art:
        T[q, :n_real] = -A_std[art_rows].sum(axis=0)
        T[q, -1] = -b_std[art_rows].sum()
        status, k = kernels.simplex_loop(T, basis, n_real, tol, max_pivots)
        pivots += k
        if status == 2:
            return LPSolution("failed", pivots=pivots)
        if -T[q, -1] > FEAS_TOL * max(1.0, float(np.max(np.abs(b_std)))):
            return LPSolution("infeasible", pivots=pivots)
        # drive remaining (zero-level) artificials out of the basis
        keep = np.ones(q, dtype=bool)
        for i in range(q):
            if basis[i] >= n_real:
                row = np.abs(T[i, :n_real])
                j = int(np.argmax(row)) if n_real else -1
                if j >= 0 and row[j] > 1e-9:
                    kernels.pivot(T, i, j)
                    basis[i] = j
                    pivots += 1
                else:
                    keep[i] = False
        if not keep.all():
            rows = np.concatenate([np.flatnonzero(keep), [q]])
            T = np.ascontiguousarray(T[rows])
            basis = np.ascontiguousarray(basis[keep])
    else:
        keep = np.ones(q, dtype=bool)

    mq = T.shape[0] - 1
    cB = c_std[basis]
    T[mq, :n_real] = c_std - cB @ T[:mq, :n_real]
    T[mq, n_real:-1] = 0.0
    T[mq, -1] = -cB @ T[:mq, -1]
    status, k = kernels.simplex_loop(T, basis, n_real, tol, max_pivots - pivots)
    pivots += k
    if status == 1:
        return LPSolution("unbounded", pivots=pivots)
    if status == 2:
        return LPSolution("failed", pivots=pivots)

    z = np.zeros(n_real)
    z[basis] = T[:mq, -1]
    x = np.zeros(p)
    for col in range(n_struct):
        x[col_var[col]] += col_sign[col] * z[col]

    rows = np.flatnonzero(keep)
    B = A_std[np.ix_(rows, basis)]
    try:
        y_std = np.linalg.solve(B.T, c_std[basis])
    except np.linalg.LinAlgError:
        y_std = np.linalg.lstsq(B.T, c_std[basis], rcond=None)[0]
    y = np.zeros(q)
    y[rows] = sign[rows] * y_std
    y = y / rscale
    if P.sense == "max":
        y = -y
    value = float(P.c @ x)
    return LPSolution(
        "optimal", x, y, value, float(P.b @ y), pivots,
        _primal_violation(P, x), _dual_violation(P, y),
    )


def dual_norm_value(L, b, v) -> tuple[float, float]:
    """Both sides of ``sup_{L phi <= b} <phi, v> = inf_{y >= 0, L^T y = v} b.y``.

    ``L`` is a ``(q, p)`` matrix acting on coordinates of ``phi``.  Raises
    ``ValueError`` if no ``phi`` satisfies ``L phi <= b``.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    q, p = L.shape
    feas = lp_solve(LPProblem(np.zeros(p), L, b))
    if feas.status != "optimal":
        raise ValueError("no phi satisfies L(phi) <= b")
    sup = lp_solve(LPProblem(v, L, b, sense="max"))
    inf = lp_solve(LPProblem(b, L.T, v, ("=",) * p, ("nonneg",) * q, sense="min"))
    if sup.status == "unbounded" and inf.status == "infeasible":
        return float("inf"), float("inf")
    if not (sup.optimal and inf.optimal):
        raise ArithmeticError(f"LP failure: sup {sup.status}, inf {inf.status}")
    return sup.value, inf.value


@dataclass(frozen=True)
class Polytope:
    """``{v : A v <= b}``; optionally carries its vertex list."""

    A: np.ndarray
    b: np.ndarray
    vertices: Optional[np.ndarray] = None
    degenerate: bool = False

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.size:
            raise ValueError("A and b disagree on the number of halfspaces")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.vertices is not None:
            object.__setattr__(self, "vertices", np.atleast_2d(np.asarray(self.vertices, dtype=float)))

    @classmethod
    def whole(cls, d: int) -> "Polytope":
        return cls(np.zeros((0, d)), np.zeros(0))

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        d = lo.size
        A = np.vstack([np.eye(d), -np.eye(d)])
        return cls(A, np.concatenate([hi, -lo]))

    @classmethod
    def point(cls, p) -> "Polytope":
        p = np.asarray(p, dtype=float)
        return cls.box(p, p)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains(self, p, tol: float = FEAS_TOL) -> bool:
        p = np.asarray(p, dtype=float).reshape(-1)
        if self.A.shape[0] == 0:
            return True
        return bool(np.all(self.A @ p <= self.b + tol * (1.0 + np.abs(self.b))))

    def margin(self, p) -> float:
        """Largest constraint violation at ``p`` (<= 0 inside)."""
        if self.A.shape[0] == 0:
            return -np.inf
        return float(np.max(self.A @ np.asarray(p, dtype=float) - self.b))

    def maximize(self, c) -> LPSolution:
        return lp_solve(LPProblem(np.asarray(c, dtype=float), self.A, self.b, sense="max"))

    def feasible_point(self) -> Optional[np.ndarray]:
        sol = lp_solve(LPProblem(np.zeros(self.dim), self.A, self.b))
        return sol.x if sol.optimal else None

    def is_empty(self) -> bool:
        return self.feasible_point() is None

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return Polytope(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))

    def subset_of(self, other: "Polytope", tol: float = 1e-8) -> bool:
        """Halfspace implication: every constraint of ``other`` holds on ``self``."""
        if self.is_empty():
            return True
        for a, c in zip(other.A, other.b):
            sol = self.maximize(a)
            if sol.status == "unbounded" or (sol.optimal and sol.value > c + tol * (1 + abs(c))):
                return False
        return True


def _affine_frame(points: np.ndarray, tol: float = 1e-10):
    base = points[0]
    U, s, Vt = np.linalg.svd(points - base, full_matrices=True)
    scale = max(1.0, float(s[0])) if s.size else 1.0
    rank = int(np.sum(s > tol * scale))
    return base, Vt[:rank], Vt[rank:], rank


def convex_hull(points) -> Polytope:
    """Halfspace description of the convex hull of ``points`` (ambient d <= 4).

    Affinely dependent input yields a lower-dimensional description (equalities
    as paired halfspaces) with ``degenerate=True``.
    """
    pts = np.unique(np.atleast_2d(np.asarray(points, dtype=float)), axis=0)
    d = pts.shape[1]
    if d > 4:
        raise ValueError("convex_hull supports ambient dimension <= 4")
    base, along, normal, rank = _affine_frame(pts)
    if rank == d:
        try:
            hull = ConvexHull(pts)
        except QhullError as exc:
            raise ArithmeticError(f"hull computation failed: {exc}") from exc
        eq = hull.equations
        return Polytope(eq[:, :-1], -eq[:, -1], pts[hull.vertices])
    A_rows, b_rows = [], []
    for nv in normal:
        c = float(nv @ base)
        A_rows += [nv, -nv]
        b_rows += [c, -c]
    local = (pts - base) @ along.T
    if rank == 0:
        verts = pts[:1]
    elif rank == 1:
        lo, hi = local[:, 0].min(), local[:, 0].max()
        A_rows += [along[0], -along[0]]
        b_rows += [hi + along[0] @ base, -(lo + along[0] @ base)]
        verts = np.array([base + lo * along[0], base + hi * along[0]])
    else:
        hull = ConvexHull(local)
        for eq in hull.equations:
            a_loc, off = eq[:-1], eq[-1]
            a = a_loc @ along
            A_rows.append(a)
            b_rows.append(-off + a @ base)
        verts = pts[hull.vertices]
    return Polytope(np.array(A_rows), np.array(b_rows), verts, degenerate=True)


class ConvexBody:
    """Convex set described by a membership oracle and a bounding box."""

    def __init__(self, contains: Callable[[np.ndarray], bool], lo, hi, samples_per_axis: int = 9):
        self._contains = contains
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.samples_per_axis = samples_per_axis

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, p) -> bool:
        return bool(self._contains(np.asarray(p, dtype=float)))

    def intersects_box(self, lo, hi) -> bool:
        # oracle-only: sampled test, may miss thin intersections
        axes = [np.linspace(a, b, self.samples_per_axis) for a, b in zip(lo, hi)]
        return any(self.contains(np.array(p)) for p in itertools.product(*axes))


class HalfspaceBody(ConvexBody):
    """``{v : A v <= b}`` presented as an oracle (exact box intersection by LP)."""

    def __init__(self, A, b, lo=None, hi=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float)
        if lo is None or hi is None:
            lo, hi = _lp_bbox(self.A, self.b)
        super().__init__(lambda p: bool(np.all(self.A @ p <= self.b + 1e-12)), lo, hi)

    def intersects_box(self, lo, hi) -> bool:
        d = self.dim
        box = Polytope.box(lo, hi)
        return Polytope(np.vstack([self.A, box.A]), np.concatenate([self.b, box.b])).feasible_point() is not None

    def distance_inf(self, p) -> float:
        """l-infinity distance from ``p`` to the body (LP)."""
        d = self.dim
        # variables (v, t): minimize t with |v - p| <= t, A v <= b
        A = np.block([
            [self.A, np.zeros((self.A.shape[0], 1))],
            [np.eye(d), -np.ones((d, 1))],
            [-np.eye(d), -np.ones((d, 1))],
        ])
        b = np.concatenate([self.b, p, -p])
        c = np.zeros(d + 1)
        c[-1] = 1.0
        sol = lp_solve(LPProblem(c, A, b, sense="min"))
        return sol.value


class HullBody(ConvexBody):
    """Convex hull of finitely many points, presented as an oracle."""

    def __init__(self, points):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        super().__init__(self._member, self.points.min(axis=0), self.points.max(axis=0))

    def _feasible(self, lo, hi) -> bool:
        k, d = self.points.shape
        A_eq = np.vstack([self.points.T, np.ones((1, k))])
        A = np.vstack([A_eq, -A_eq[:d]])
        b = np.concatenate([hi, [1.0], -lo])
        kinds = ("<=",) * d + ("=",) + ("<=",) * d
        sol = lp_solve(LPProblem(np.zeros(k), A, b, kinds, ("nonneg",) * k))
        return sol.optimal

    def _member(self, p) -> bool:
        return self._feasible(p - 1e-12, p + 1e-12)

    def intersects_box(self, lo, hi) -> bool:
        return self._feasible(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))


def _lp_bbox(A, b):
    d = A.shape[1]
    lo, hi = np.zeros(d), np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        up = lp_solve(LPProblem(e, A, b, sense="max"))
        dn = lp_solve(LPProblem(e, A, b, sense="min"))
        if not (up.optimal and dn.optimal):
            raise ValueError("convex set is empty or unbounded")
        lo[i], hi[i] = dn.value, up.value
    return lo, hi


def polytope_approx(K, delta: float) -> Polytope:
    """Polytope ``K_delta`` with ``K <= K_delta <= B_delta(K)`` in the l-infinity norm.

    ``K_delta`` is the convex hull of every grid cube of side ``delta`` that
    meets ``K``.  A :class:`Polytope` is returned unchanged.
    """
    if isinstance(K, Polytope):
        return K
    if delta <= 0:
        raise ValueError("delta must be positive")
    if K.dim > 4:
        raise ValueError("oracle approximation supports ambient dimension <= 4")
    if not (np.all(np.isfinite(K.lo)) and np.all(np.isfinite(K.hi))):
        raise ValueError("convex set must be bounded")
    k_lo = np.floor(K.lo / delta).astype(int)
    k_hi = np.floor(K.hi / delta).astype(int)
    corners = []
    offsets = np.array(list(itertools.product((0.0, 1.0), repeat=K.dim)))
    for k in itertools.product(*(range(a, b + 1) for a, b in zip(k_lo, k_hi))):
        lo = np.array(k, dtype=float) * delta
        hi = lo + delta
        if K.contains(0.5 * (lo + hi)) or K.intersects_box(lo, hi):
            corners.append(lo + delta * offsets)
    if not corners:
        raise ValueError("convex set is empty")
    return convex_hull(np.vstack(corners))


def polytope_approx_normed(K: HalfspaceBody, delta: float, T, M: float) -> Polytope:
    """Approximation in a general norm on R^d.

    ``T`` is a linear isomorphism ``R^d -> V`` (matrix) with
    ``M^-1 ||v||_V <= ||T^{-1} v||_inf <= M ||v||_V``; the result satisfies
    ``K <= K_delta <= B_delta(K)`` in ``||.||_V``.
    """
    T = np.asarray(T, dtype=float)
    Tinv = np.linalg.inv(T)
    pulled = HalfspaceBody(K.A @ T, K.b)
    Kt = polytope_approx(pulled, delta / M)
    verts = None if Kt.vertices is None else Kt.vertices @ T.T
    return Polytope(Kt.A @ Tinv, Kt.b, verts, Kt.degenerate)
