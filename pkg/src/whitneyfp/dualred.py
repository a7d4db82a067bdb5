"""Dual Whitney functionals, node aggregation and support reduction along trunks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .clustering import (
    ClusterTree,
    Node,
    branch_nodes,
    build_clustering,
    dual_cluster_norm,
    Trunk,
    restrict_tree,
    trunks,
)
from .polyjet import VecPoly, dim_poly, multi_indices, transfer_matrix
from .whitney import PointSet, WhitneyField

DEPENDENCE_TOL = 1e-9
THETA_SNAP = 1e-12


@dataclass(frozen=True)
class DualFunctional:
    """Linear functional on R^D-valued polynomials of degree <= m-1.

    Acts by pairing ``coeffs[j, a]`` with ``d^alpha P_j(base)``.
    """

    base: np.ndarray
    coeffs: np.ndarray  # (D, dim_poly(n, m-1))
    m: int

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).reshape(-1)
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if coeffs.shape[1] != dim_poly(base.size, self.m - 1):
            raise ValueError("coefficient count does not match (n, m)")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls, base, m: int, D: int = 1) -> "DualFunctional":
        base = np.asarray(base, dtype=float).reshape(-1)
        return cls(base, np.zeros((D, dim_poly(base.size, m - 1))), m)

    @classmethod
    def evaluation(cls, base, m: int, D: int = 1, j: int = 0, alpha: Optional[Sequence[int]] = None) -> "DualFunctional":
        """``P -> d^alpha P_j(base)`` (plain evaluation when ``alpha`` is omitted)."""
        f = cls.zero(base, m, D)
        c = f.coeffs.copy()
        alpha = tuple(alpha) if alpha is not None else (0,) * f.n
        c[j, multi_indices(f.n, m - 1).index(alpha)] = 1.0
        return cls(f.base, c, m)

    @property
    def n(self) -> int:
        return self.base.size

    @property
    def D(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, P: VecPoly) -> float:
        return float(np.sum(self.coeffs * P.derivatives_at(self.base)))

    pair = __call__

    def rebase(self, at) -> "DualFunctional":
        """Same functional, expressed through derivative values at ``at``."""
        at = np.asarray(at, dtype=float).reshape(-1)
        if np.array_equal(at, self.base):
            return self
        M = transfer_matrix(self.n, self.m - 1, self.base - at)
        return DualFunctional(at, self.coeffs @ M, self.m)

    def __add__(self, other: "DualFunctional") -> "DualFunctional":
        other = other.rebase(self.base)
        return DualFunctional(self.base, self.coeffs + other.coeffs, self.m)

    def __mul__(self, s: float) -> "DualFunctional":
        return DualFunctional(self.base, self.coeffs * float(s), self.m)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


class DualField:
    """An element of the dual of Whitney fields: one functional per point, based there."""

    def __init__(self, base: PointSet, coeffs, m: int):
        if not isinstance(base, PointSet):
            base = PointSet(base)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 3 or coeffs.shape[0] != len(base) or coeffs.shape[2] != dim_poly(base.n, m - 1):
            raise ValueError("coefficients must have shape (|S|, D, dim P)")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        self.base = base
        self.coeffs = coeffs
        self.m = m

    @classmethod
    def from_functionals(cls, base, functionals: Sequence[DualFunctional]) -> "DualField":
        if not isinstance(base, PointSet):
            base = PointSet(base)
        fs = [f.rebase(x) for f, x in zip(functionals, base.points)]
        return cls(base, np.stack([f.coeffs for f in fs]), fs[0].m)

    @classmethod
    def from_vector(cls, base: PointSet, v, m: int, D: int) -> "DualField":
        """From flat jet coordinates (the layout of ``whitney.norm_functionals``)."""
        return cls(base, np.asarray(v, dtype=float).reshape(len(base), D, -1), m)

    @property
    def D(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n(self) -> int:
        return self.base.n

    def __len__(self):
        return len(self.base)

    def __getitem__(self, i: int) -> DualFunctional:
        return DualFunctional(self.base.points[i], self.coeffs[i], self.m)

    @property
    def functionals(self) -> list[DualFunctional]:
        return [self[i] for i in range(len(self))]

    def vector(self) -> np.ndarray:
        return self.coeffs.ravel()

    def support(self) -> list[int]:
        return [i for i in range(len(self)) if np.any(self.coeffs[i])]

    def pair(self, W: WhitneyField) -> float:
        """``sum_x xi_x(P^x)``."""
        return float(np.sum(self.coeffs * W.own_derivatives()))

    def scaled(self, theta) -> "DualField":
        theta = np.asarray(theta, dtype=float)
        return DualField(self.base, self.coeffs * theta[:, None, None], self.m)

    def restrict(self, idx: Sequence[int]) -> "DualField":
        idx = list(idx)
        return DualField(self.base.subset(idx), self.coeffs[idx], self.m)

    def total(self, at=None) -> DualFunctional:
        return aggregate(self, range(len(self)), at)


def aggregate(xi: DualField, V, at=None) -> DualFunctional:
    """``xi_V = sum_{x in V} xi_x`` expressed at base point ``at``.

    ``V`` is a node or an iterable of point indices; ``at`` defaults to the
    node's reference point (or the first member).
    """
    if isinstance(V, Node):
        members = V.members
        default = V.ref
    else:
        members = tuple(int(i) for i in V)
        default = members[0] if members else None
    if not members:
        raise ValueError("empty node")
    if any(i < 0 or i >= len(xi) for i in members):
        raise ValueError("node is not a subset of S")
    at = xi.base.points[default] if at is None else np.asarray(at, dtype=float).reshape(-1)
    n, d = xi.n, xi.m - 1
    c = np.zeros(xi.coeffs.shape[1:])
    for i in members:
        if np.any(xi.coeffs[i]):
            c += xi.coeffs[i] @ transfer_matrix(n, d, xi.base.points[i] - at)
    return DualFunctional(at, c, xi.m)


# --- fiber functions ---------------------------------------------------------


@dataclass(frozen=True)
class FiberFunction:
    """``Phi(x_i, xi_i)``: positively 1-homogeneous on each fiber, zero at 0."""

    evaluator: Callable[[int, DualFunctional], float]
    name: str = "phi"

    def __call__(self, i: int, f: DualFunctional) -> float:
        if f.is_zero():
            return 0.0
        return float(self.evaluator(i, f))

    def values(self, xi: DualField) -> np.ndarray:
        return np.array([self(i, xi[i]) for i in range(len(xi))])


def linear_fiber(weights) -> FiberFunction:
    """``Phi(x_i, xi) = <w_i, coeffs of xi at x_i>``; a simple homogeneous test fiber."""
    w = np.asarray(weights, dtype=float)
    return FiberFunction(lambda i, f: float(np.sum(w[i] * f.coeffs)), "linear")


def norm_fiber() -> FiberFunction:
    """``Phi(x_i, xi) = l1 norm of the coefficients``; convex and homogeneous."""
    return FiberFunction(lambda i, f: float(np.abs(f.coeffs).sum()), "l1")


# --- reduction ---------------------------------------------------------------


def support_bound(dimP: int) -> int:
    """Largest support guaranteed after reduction: ``2^{dim P}``."""
    if dimP < 1:
        raise ValueError("dim P must be >= 1")
    return 2 ** dimP


def augmented_matrix(T: ClusterTree, xi: DualField, phi_vals: np.ndarray, nodes: Sequence[int], at=None) -> np.ndarray:
    """Rows ``(xi_V, Phi(xi_V))`` for the given node ids, functionals based at ``at``."""
    at = T.point(T.root.ref) if at is None else at
    rows = []
    for v in nodes:
        V = T.nodes[v]
        rows.append(np.append(aggregate(xi, V.members, at).coeffs.ravel(), phi_vals[list(V.members)].sum()))
    return np.array(rows)


def _rank(A: np.ndarray) -> tuple[int, np.ndarray]:
    u, s, vt = np.linalg.svd(A.T, full_matrices=True)
    smax = s.max() if s.size else 0.0
    r = int(np.sum(s > DEPENDENCE_TOL * smax)) if smax > 0 else 0
    return r, vt


@dataclass
class ReductionStep:
    trunk: tuple[int, ...]
    zeroed: tuple[int, ...]  # point indices (in the step's base) set to zero
    lambdas: dict
    theta_min: float
    theta_max: float
    inflation: float  # dual cluster norm ratio eta / xi on the step tree
    theta: np.ndarray = field(repr=False, default=None)


def reduce_once(T: ClusterTree, xi: DualField, phi: FiberFunction, trunk, phi_vals: Optional[np.ndarray] = None
                ) -> tuple[DualField, ReductionStep]:
    """Zero one branch node of ``trunk`` using a linear dependence of the augmented vectors.

    ``eta_x = theta_x xi_x`` with ``theta = 0`` on the pivot node,
    ``1 + lambda_W`` on the other branch nodes and 1 elsewhere; both
    ``sum xi_x`` and ``sum Phi(xi_x)`` are preserved.
    """
    if not isinstance(trunk, Trunk):
        trunk = Trunk(tuple(trunk))
    B = branch_nodes(T, trunk)
    if phi_vals is None:
        phi_vals = phi.values(xi)
    A = augmented_matrix(T, xi, phi_vals, B)
    r, vt = _rank(A)
    if len(B) <= r:
        raise ValueError("augmented branch vectors are linearly independent; nothing to reduce")
    mu = vt[-1]
    mag = np.abs(mu)
    piv = int(np.flatnonzero(mag >= mag.max() * (1.0 - 1e-12))[0])
    lam = -mu / mu[piv]
    theta = np.ones(len(xi))
    lambdas = {}
    for b, v in enumerate(B):
        members = list(T.nodes[v].members)
        if b == piv:
            theta[members] = 0.0
        else:
            t = 1.0 + lam[b]
            # lambda = -1 up to SVD rounding is an exact cancellation
            theta[members] = 0.0 if abs(t) <= THETA_SNAP else t
            lambdas[v] = float(lam[b])
    eta = xi.scaled(theta)
    before = dual_cluster_norm(T, xi)
    after = dual_cluster_norm(T, eta)
    infl = after / before if before > 0 else 0.0
    zeroed = tuple(T.nodes[B[piv]].members)
    return eta, ReductionStep(trunk.nodes, zeroed, lambdas, float(theta.min()), float(theta.max()), infl, theta)


@dataclass
class ReductionResult:
    support: list[int]  # indices into the original S
    eta: DualField
    tree: Optional[ClusterTree]  # restricted tree on the final support
    steps: list[ReductionStep] = field(default_factory=list)

    @property
    def inflation(self) -> float:
        out = 1.0
        for s in self.steps:
            out *= s.inflation if s.inflation > 0 else 1.0
        return out


def _dependent_trunk(T: ClusterTree, xi: DualField, phi_vals: np.ndarray):
    for tr in trunks(T):
        B = branch_nodes(T, tr)
        r, _ = _rank(augmented_matrix(T, xi, phi_vals, B))
        if len(B) > r:
            return tr
    return None


def reduce_support(T: ClusterTree, xi: DualField, phi: FiberFunction) -> ReductionResult:
    """Shrink the support of ``xi`` until every trunk has independent branch vectors."""
    if len(T.base) != len(xi) or not np.array_equal(T.base.points, xi.base.points):
        raise ValueError("tree and dual field live on different point sets")
    k = len(xi)
    coeffs = np.array(xi.coeffs)
    phi_vals = phi.values(xi)
    steps: list[ReductionStep] = []
    while True:
        supp = [i for i in range(k) if np.any(coeffs[i])]
        if len(supp) <= 1:
            tree = restrict_tree(T, supp)[0] if supp else None
            break
        tree, keep = restrict_tree(T, supp)
        sub = DualField(tree.base, coeffs[keep], xi.m)
        tr = _dependent_trunk(tree, sub, phi_vals[keep])
        if tr is None:
            break
        eta_sub, step = reduce_once(tree, sub, phi, tr, phi_vals[keep])
        for a, i in enumerate(keep):
            coeffs[i] = eta_sub.coeffs[a]
            phi_vals[i] *= step.theta[a]  # positive homogeneity
        step.zeroed = tuple(keep[a] for a in step.zeroed)
        steps.append(step)
    eta = DualField(xi.base, coeffs, xi.m)
    supp = [i for i in range(k) if np.any(coeffs[i])]
    return ReductionResult(supp, eta, tree, steps)


def reduce_with_clustering(xi: DualField, phi: FiberFunction) -> ReductionResult:
    return reduce_support(build_clustering(xi.base), xi, phi)


# --- dual norm of W^m(S) -----------------------------------------------------


def whitney_dual_norm(xi: DualField, flavor: str = "norm") -> float:
    """Norm of ``xi`` dual to ``field_norm`` (or ``field_seminorm``), by LP.

    ``min t`` over representations ``xi = A^T mu + B^T nu`` with
    ``|mu|_1 <= t`` and ``|nu|_1 <= t``; for the seminorm ``mu = 0``.
    Returns ``inf`` when ``xi`` is not representable (seminorm flavor and
    ``xi`` not annihilating constants).
    """
    from .convexlp import LPProblem, lp_solve
    from .whitney import norm_functionals

    A, B = norm_functionals(xi.base, xi.m, xi.D)
    if flavor == "seminorm":
        A = np.zeros((0, A.shape[1]))
    elif flavor != "norm":
        raise ValueError(f"unknown flavor {flavor!r}")
    v = xi.vector()
    p, q, d = A.shape[0], B.shape[0], A.shape[1]
    # variables: mu+ mu- nu+ nu- t (all >= 0)
    nv = 2 * p + 2 * q + 1
    Aeq = np.hstack([A.T, -A.T, B.T, -B.T, np.zeros((d, 1))])
    rows = [Aeq]
    kinds = ["="] * d
    rhs = [v]
    if p:
        r = np.zeros((1, nv)); r[0, :2 * p] = 1.0; r[0, -1] = -1.0
        rows.append(r); kinds.append("<="); rhs.append(np.zeros(1))
    if q:
        r = np.zeros((1, nv)); r[0, 2 * p:2 * p + 2 * q] = 1.0; r[0, -1] = -1.0
        rows.append(r); kinds.append("<="); rhs.append(np.zeros(1))
    c = np.zeros(nv); c[-1] = 1.0
    sol = lp_solve(LPProblem(c, np.vstack(rows), np.concatenate(rhs), tuple(kinds), ("nonneg",) * nv, "min"))
    if sol.status == "infeasible":
        return float("inf")
    if not sol.optimal:
        raise RuntimeError(f"dual norm LP failed: {sol.status}")
    return float(sol.value)
