"""Whitney fields on finite sets, their norms, and a Whitney extension operator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .polyjet import (
    VecPoly,
    _basis,
    deriv_matrix,
    dim_poly,
    multi_indices,
    shift_matrix,
    trunc_mul,
    transfer_matrix,
    trunc_reciprocal,
)

MAX_DEPTH = 24
DILATION = 2.0


class PointSet:
    """Finite set of distinct points in R^n, kept in the given order."""

    def __init__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.size == 0:
            raise ValueError("point set is empty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("points must be pairwise distinct")
        pts.setflags(write=False)
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.points[i]

    def __iter__(self):
        return iter(self.points)

    @property
    def diameter(self) -> float:
        p = self.points
        if len(p) < 2:
            return 0.0
        return float(np.max(np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)))

    def distances(self) -> np.ndarray:
        p = self.points
        return np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)

    def subset(self, idx: Sequence[int]) -> "PointSet":
        return PointSet(self.points[list(idx)])

    def __repr__(self):
        return f"PointSet({self.points.tolist()})"


class WhitneyField:
    """A jet ``P^x`` (degree <= m-1, R^D-valued) attached to every point of ``base``."""

    def __init__(self, base: PointSet, jets: Sequence[VecPoly], m: int):
        if not isinstance(base, PointSet):
            base = PointSet(base)
        jets = tuple(jets)
        if len(jets) != len(base):
            raise ValueError(f"{len(base)} points but {len(jets)} jets")
        D = jets[0].D
        for J in jets:
            if J.n != base.n or J.degree_bound != m - 1 or J.D != D:
                raise ValueError("all jets must share (n, m, D) with the base")
        self.base = base
        self.jets = jets
        self.m = m
        self.D = D
        self.coeffs = np.stack([J.coeff_matrix for J in jets])  # (k, D, N)
        self.coeffs.setflags(write=False)

    @classmethod
    def from_derivatives(cls, base, derivs, m: int) -> "WhitneyField":
        """``derivs[i, j, a]`` is ``d^alpha P^{x_i}_j (x_i)``."""
        if not isinstance(base, PointSet):
            base = PointSet(base)
        derivs = np.asarray(derivs, dtype=float)
        jets = [VecPoly.from_derivatives(base.n, m - 1, d, x) for d, x in zip(derivs, base.points)]
        return cls(base, jets, m)

    @classmethod
    def zeros(cls, base, m: int, D: int = 1) -> "WhitneyField":
        if not isinstance(base, PointSet):
            base = PointSet(base)
        return cls(base, [VecPoly.zeros(base.n, m - 1, D) for _ in range(len(base))], m)

    @classmethod
    def restriction_of(cls, F: VecPoly, base, m: int) -> "WhitneyField":
        """Field of (m-1)-jets of a polynomial map (degree <= m-1 gives ``P^x = F``)."""
        if not isinstance(base, PointSet):
            base = PointSet(base)
        if F.degree_bound < m - 1:
            raise ValueError("polynomial degree bound is below m-1")
        N = dim_poly(F.n, m - 1)
        jets = []
        for x in base.points:
            centered = F.coeff_matrix @ shift_matrix(F.n, F.degree_bound, x).T
            jets.append(VecPoly.from_matrix(F.n, m - 1, centered[:, :N] @ shift_matrix(F.n, m - 1, -x).T))
        return cls(base, jets, m)

    @property
    def n(self) -> int:
        return self.base.n

    def __len__(self):
        return len(self.base)

    def own_derivatives(self) -> np.ndarray:
        """``(k, D, N)`` array of ``d^alpha P^x_j (x)``."""
        return self.cross_derivatives()[np.arange(len(self)), np.arange(len(self))]

    def cross_derivatives(self) -> np.ndarray:
        """``E[i, l, j, a] = d^alpha P^{x_l}_j (x_i)``."""
        n, d = self.n, self.m - 1
        Dm = np.stack([deriv_matrix(n, d, x) for x in self.base.points])  # (k, N, N)
        return np.einsum("ian,ldn->ilda", Dm, self.coeffs)

    def restrict(self, idx: Sequence[int]) -> "WhitneyField":
        idx = list(idx)
        return WhitneyField(self.base.subset(idx), [self.jets[i] for i in idx], self.m)

    def __add__(self, other: "WhitneyField") -> "WhitneyField":
        return WhitneyField(self.base, [a + b for a, b in zip(self.jets, other.jets)], self.m)

    def __mul__(self, s: float) -> "WhitneyField":
        return WhitneyField(self.base, [a * s for a in self.jets], self.m)

    __rmul__ = __mul__


def _pair_term(W: WhitneyField) -> float:
    k = len(W)
    if k < 2:
        return 0.0
    E = W.cross_derivatives()
    own = E[np.arange(k), np.arange(k)]  # (k, D, N)
    diff = np.abs(own[:, None] - E)  # (x, y, D, N)
    dist = W.base.distances()
    orders = _basis(W.n, W.m - 1).orders
    with np.errstate(divide="ignore", invalid="ignore"):
        w = dist[:, :, None] ** (W.m - orders)[None, None, :]
        q = diff.max(axis=2) / w
    q[np.arange(k), np.arange(k)] = 0.0
    return float(q.max())


def field_norm(W: WhitneyField) -> float:
    """Value-plus-divided-difference norm of a Whitney field."""
    if len(W) == 0:
        raise ValueError("empty point set")
    return float(np.abs(W.own_derivatives()).max()) + _pair_term(W)


def field_seminorm(W: WhitneyField) -> float:
    """Divided-difference part only (0 on a single point)."""
    return _pair_term(W)


# --- extension -------------------------------------------------------------


def _uni_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    K = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for i in range(K):
        out[..., i:] += a[..., i:i + 1] * b[..., :K - i]
    return out


def _uni_recip(t: np.ndarray) -> np.ndarray:
    K = t.shape[-1]
    t0 = t[..., :1]
    v = -t / t0
    v[..., 0] = 0.0
    out = np.zeros_like(t)
    out[..., 0] = 1.0
    term = out.copy()
    for _ in range(K - 1):
        term = _uni_mul(term, v)
        out = out + term
    return out / t0


def _uni_exp(g: np.ndarray) -> np.ndarray:
    K = g.shape[-1]
    h = g.copy()
    h[..., 0] = 0.0
    e = np.zeros_like(g)
    e[..., 0] = 1.0
    term = e.copy()
    for k in range(1, K):
        term = _uni_mul(term, h) / k
        e = e + term
    return np.exp(g[..., :1]) * e


def _bump_taylor(u: np.ndarray, order: int) -> np.ndarray:
    """Taylor coefficients (in powers of du) of the plateau cutoff.

    The cutoff is 1 for ``|u| <= 1/DILATION``, 0 for ``|u| >= 1`` and
    ``s(t) = e(t) / (e(t) + e(1 - t))`` in between, with ``e(t) = exp(-1/t)``
    and ``t`` the affine coordinate running from 0 at ``|u| = 1`` to 1 at
    the plateau edge.  Shape ``u.shape + (order + 1,)``.
    """
    K = order + 1
    u = np.asarray(u, dtype=float)
    width = 1.0 - 1.0 / DILATION
    out = np.zeros(u.shape + (K,))
    t_val = (1.0 - np.abs(u)) / width
    out[..., 0] = np.where(t_val >= 1.0, 1.0, 0.0)
    ramp = (t_val > 0.0) & (t_val < 1.0)
    if not ramp.any():
        return out
    tv = t_val[ramp]
    sign = np.sign(u[ramp])
    t = np.zeros(tv.shape + (K,))
    t[:, 0] = tv
    if K > 1:
        t[:, 1] = -sign / width
    one_minus = -t
    one_minus[:, 0] = 1.0 - tv
    e1 = _uni_exp(-_uni_recip(t))
    e2 = _uni_exp(-_uni_recip(one_minus))
    out[ramp] = _uni_mul(e1, _uni_recip(e1 + e2))
    return out


@dataclass(frozen=True)
class _Cubes:
    center: np.ndarray  # (K, n)
    half: np.ndarray  # (K, n)
    depth: np.ndarray  # (K,)
    owner: np.ndarray  # (K,) index of assigned data point
    whitney: np.ndarray  # (K,) True for cubes accepted by the Whitney criterion


def _dist_box_points(lo: np.ndarray, hi: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Euclidean distance from each box (rows of lo/hi) to the nearest point."""
    gap = np.maximum(0.0, np.maximum(lo[:, None, :] - pts[None], pts[None] - hi[:, None, :]))
    return np.linalg.norm(gap, axis=2).min(axis=1)


def _decompose(lo: np.ndarray, hi: np.ndarray, pts: np.ndarray, max_depth: int) -> _Cubes:
    n = lo.size
    offsets = np.array(np.meshgrid(*[[0.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
    centers = [(lo + hi)[None] / 2.0]
    halves = [(hi - lo)[None] / 2.0]
    done_c, done_h, done_d, done_w = [], [], [], []
    cur_c, cur_h = centers[0], halves[0]
    for depth in range(max_depth + 1):
        side = 2.0 * cur_h.max(axis=1)
        dist = _dist_box_points(cur_c - cur_h, cur_c + cur_h, pts)
        accept = side <= dist / 2.0
        if depth == max_depth:
            accept = np.ones_like(accept)
        done_c.append(cur_c[accept])
        done_h.append(cur_h[accept])
        done_d.append(np.full(accept.sum(), depth))
        done_w.append(side[accept] <= dist[accept] / 2.0)
        split_c, split_h = cur_c[~accept], cur_h[~accept]
        if split_c.shape[0] == 0:
            break
        child_h = split_h / 2.0
        cur_c = (split_c[:, None, :] - child_h[:, None, :] + 2.0 * child_h[:, None, :] * offsets[None]).reshape(-1, n)
        cur_h = np.repeat(child_h, len(offsets), axis=0)
    center = np.vstack(done_c)
    half = np.vstack(done_h)
    d2 = ((center[:, None, :] - pts[None]) ** 2).sum(axis=2)
    owner = np.argmin(d2, axis=1)
    return _Cubes(center, half, np.concatenate(done_d), owner, np.concatenate(done_w))


class ExtensionFunction:
    """``F = sum_Q phi_Q P^{x_Q}`` over a Whitney decomposition of a box.

    ``phi_Q`` is the normalized plateau cutoff equal to 1 on ``Q`` and
    supported in ``Q`` dilated by ``DILATION``; ``x_Q`` is the data point nearest to the cube center.
    Evaluable with all derivatives up to order ``m`` inside the box.
    """

    def __init__(self, source: WhitneyField, lo, hi, max_depth: int = MAX_DEPTH):
        self.source = source
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.m = source.m
        self.n = source.n
        self.D = source.D
        self.cubes = _decompose(self.lo, self.hi, source.base.points, max_depth)
        # data jets raised to degree m, origin basis: (k, D, N_m)
        self._raised = np.stack([
            np.stack([p.raised(self.m).coeffs for p in J.components]) for J in source.jets
        ])

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi

    def _check(self, y: np.ndarray):
        if y.size != self.n:
            raise ValueError(f"query has dimension {y.size}, expected {self.n}")
        if np.any(y < self.lo) or np.any(y > self.hi):
            raise ValueError("extension is only defined inside its bounding box")

    def taylor(self, y, order: Optional[int] = None) -> np.ndarray:
        """Centered Taylor coefficients of ``F`` at ``y`` up to ``order`` (default m).

        Shape ``(D, dim_poly(n, order))``, basis ``multi_indices(n, order)``.
        """
        y = np.asarray(y, dtype=float).reshape(-1)
        self._check(y)
        order = self.m if order is None else order
        c = self.cubes
        scale = DILATION * c.half
        u = (y[None, :] - c.center) / scale
        active = np.all(np.abs(u) < 1.0, axis=1)
        idx = np.flatnonzero(active)
        u = u[idx]
        # separable bump jets: theta_Q coefficient alpha = prod_i h_i[alpha_i] / s_i^alpha_i
        h = _bump_taylor(u, order) / (scale[idx][:, :, None] ** np.arange(order + 1))
        exps = _basis(self.n, order).exps
        theta = np.ones((len(idx), exps.shape[0]))
        for i in range(self.n):
            theta *= h[:, i, exps[:, i]]
        owners = c.owner[idx]
        k = len(self.source)
        Theta = np.zeros((k, exps.shape[0]))
        np.add.at(Theta, owners, theta)
        used = np.flatnonzero(np.any(Theta != 0.0, axis=1))
        S = shift_matrix(self.n, self.m, y)
        # F = P_ref + sum_p phi_p (P_p - P_ref): exact wherever a single owner is active,
        # and avoids cancelling the huge bump derivatives of tiny cubes
        ref = used[np.argmax(Theta[used, 0])]
        base = self._centered_data(ref, order, S)
        others = used[used != ref]
        if others.size == 0:
            return base
        num = np.zeros((self.D, exps.shape[0]))
        for p in others:
            num += trunc_mul(Theta[p][None, :], self._centered_data(p, order, S) - base, self.n, order)
        den = Theta[used].sum(axis=0)
        return base + trunc_mul(num, trunc_reciprocal(den, self.n, order)[None, :], self.n, order)

    def _centered_data(self, p: int, order: int, S: np.ndarray) -> np.ndarray:
        # S is the degree-m shift to the query point; graded order makes truncation a prefix
        return (self._raised[p] @ S.T)[:, :dim_poly(self.n, order)]

    def derivatives(self, y, order: Optional[int] = None) -> np.ndarray:
        """``(D, N)`` array of ``d^alpha F_j(y)`` for ``|alpha| <= order``."""
        order = self.m if order is None else order
        return self.taylor(y, order) * _basis(self.n, order).fact[None, :]

    def __call__(self, y) -> np.ndarray:
        return self.taylor(y, 0)[:, 0]

    def jet_at(self, y) -> VecPoly:
        """The (m-1)-jet of ``F`` at ``y`` as a vector polynomial (origin basis)."""
        y = np.asarray(y, dtype=float).reshape(-1)
        c = self.taylor(y, self.m - 1)
        return VecPoly.from_matrix(self.n, self.m - 1, c @ shift_matrix(self.n, self.m - 1, -y).T)



def default_box(base: PointSet, margin: Optional[float] = None) -> tuple[np.ndarray, np.ndarray]:
    """Axis box around ``base`` with margin ``max(diam, 1)`` unless given."""
    pts = base.points
    if margin is None:
        margin = max(base.diameter, 1.0)
    return pts.min(axis=0) - margin, pts.max(axis=0) + margin


def whitney_extend(W: WhitneyField, box=None, max_depth: int = MAX_DEPTH) -> ExtensionFunction:
    """Linear extension reproducing every jet of ``W`` exactly at its base point."""
    lo, hi = default_box(W.base) if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
    if lo.shape != (W.n,) or hi.shape != (W.n,):
        raise ValueError("box corners must have the field's dimension")
    if np.any(hi <= lo):
        raise ValueError("degenerate box")
    pts = W.base.points
    inner = np.minimum(pts - lo, hi - pts)
    if np.any(inner <= 0.0):
        raise ValueError("data point outside the box or on its boundary")
    if np.min(inner) < W.base.diameter * (1.0 - 1e-12):
        raise ValueError("box must contain the data with margin >= diam(S)")
    return ExtensionFunction(W, lo, hi, max_depth)


@dataclass
class ExtensionNormEstimate:
    full: float  # max over |alpha| <= m of sampled sup |d^alpha F|
    homogeneous: float  # |alpha| == m layer only
    samples: int
    resolution_ok: bool
    grid_spacing: float
    shortest_cube: float


def extension_norm_estimate(F: ExtensionFunction, resolution: int = 41, rings: int = 12) -> ExtensionNormEstimate:
    """Sampled sup-norms of the derivatives of ``F`` over its box.

    Samples a uniform grid with ``resolution`` points per axis plus, around
    each data point, geometric rings of radii ``sep * 2^-k`` where the
    decomposition is finest, and 64 points on every segment between data points.  Derivatives come from the exact jets of ``F``.
    """
    n, m = F.n, F.m
    axes = [np.linspace(a, b, resolution) for a, b in zip(F.lo, F.hi)]
    grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(n, -1).T
    pts = F.source.base.points
    k = len(pts)
    if k > 1:
        d = F.source.base.distances()
        sep = np.where(np.eye(k, dtype=bool), np.inf, d).min(axis=1)
    else:
        sep = np.full(1, float(np.min(F.hi - F.lo)) / 4.0)
    dirs = np.vstack([np.eye(n), -np.eye(n), np.full((1, n), 1.0 / np.sqrt(n))])
    local = [pts[i] + (sep[i] * 2.0 ** -j) * dirs for i in range(k) for j in range(1, rings + 1)]
    # owner transitions happen between data points; sample the connecting segments densely
    ts = np.linspace(0.0, 1.0, 66)[1:-1, None]
    segs = [pts[i] + ts * (pts[j] - pts[i]) for i in range(k) for j in range(i + 1, k)]
    samples = np.vstack([grid] + local + segs + [pts])
    samples = samples[np.all((samples >= F.lo) & (samples <= F.hi), axis=1)]
    orders = _basis(n, m).orders
    full = homo = 0.0
    for y in samples:
        dv = np.abs(F.derivatives(y))
        full = max(full, float(dv.max()))
        homo = max(homo, float(dv[:, orders == m].max()))
    c = F.cubes
    near = c.whitney & (_dist_box_points(c.center - c.half, c.center + c.half, pts) <= 4.0 * sep.max())
    shortest = float(2.0 * c.half[near].max(axis=1).min()) if near.any() else float("inf")
    spacing = float(np.max((F.hi - F.lo) / (resolution - 1)))
    return ExtensionNormEstimate(full, homo, len(samples), spacing * 8.0 <= shortest, spacing, shortest)


def norm_functionals(base: PointSet, m: int, D: int = 1, ordered: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Rows of the value and difference-quotient functionals in jet coordinates.

    Coordinates are ``v[i, j, a] = d^alpha P^{x_i}_j (x_i)`` flattened in C
    order.  ``field_norm = max|A v| + max|B v|`` and ``field_seminorm = max|B v|``.
    For ``m == 1`` only unordered pairs are kept (the rows coincide up to sign)
    unless ``ordered`` is set.
    """
    n = base.n
    N = dim_poly(n, m - 1)
    k = len(base)
    A = np.eye(k * D * N)
    orders = _basis(n, m - 1).orders
    rows = []
    for i in range(k):
        for l in range(k):
            if i == l or (m == 1 and l < i and not ordered):
                continue
            h = base.points[i] - base.points[l]
            M = transfer_matrix(n, m - 1, h)  # derivs at x_i of P^{x_l} from derivs at x_l
            w = 1.0 / np.linalg.norm(h) ** (m - orders)
            for j in range(D):
                blk = np.zeros((N, k * D * N))
                blk[:, (i * D + j) * N:(i * D + j + 1) * N] = np.eye(N)
                blk[:, (l * D + j) * N:(l * D + j + 1) * N] -= M
                rows.append(blk * w[:, None])
    B = np.vstack(rows) if rows else np.zeros((0, k * D * N))
    return A, B
