"""Jets: polynomials of bounded degree, the truncated product and its module action.

Polynomials are stored as coefficient vectors in the monomial basis centered at
the origin, indexed by multi-indices in graded lexicographic order.  Anything
that needs another center (Taylor jets, derivative values, the product
``P (.)_x Q``) recenters on demand through :func:`shift_matrix`.
"""
from __future__ import annotations

import itertools
from functools import lru_cache
from math import comb, factorial
from typing import Callable, Mapping, Sequence, Union

import numpy as np

TOL = 1e-9

MultiIndex = tuple


def multi_indices(n: int, deg: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of length ``n`` and order ``<= deg``, graded lex order.

    Within one order, indices are sorted lexicographically with larger leading
    exponents first, so for ``n = 2`` the order-1 block is ``(1, 0), (0, 1)``.
    """
    return _basis(n, deg).exps_t


def order(alpha: Sequence[int]) -> int:
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index has a negative entry: {tuple(alpha)}")
    return int(sum(alpha))


def dim_poly(n: int, deg: int) -> int:
    """Dimension of the space of polynomials on R^n of degree <= deg."""
    if deg < 0:
        return 0
    return comb(n + deg, deg)


class _Basis:
    def __init__(self, n: int, deg: int):
        if n < 1:
            raise ValueError("ambient dimension must be >= 1")
        if deg < 0:
            raise ValueError("degree bound must be >= 0")
        self.n = n
        self.deg = deg
        exps = [a for a in itertools.product(range(deg + 1), repeat=n) if sum(a) <= deg]
        exps.sort(key=lambda a: (sum(a), tuple(-e for e in a)))
        self.exps_t = tuple(exps)
        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), n)
        self.orders = self.exps.sum(axis=1)
        self.index = {a: i for i, a in enumerate(exps)}
        self.size = len(exps)
        self.fact = np.array([np.prod([factorial(e) for e in a]) for a in exps], dtype=float)
        # (beta <= alpha) relation and the binomial/exponent data used by shifts
        N = self.size
        le = np.all(self.exps[:, None, :] <= self.exps[None, :, :], axis=2)
        self.le = le
        binom = np.zeros((N, N))
        for b, a in zip(*np.nonzero(le)):
            binom[b, a] = np.prod([comb(int(x), int(y)) for x, y in zip(self.exps[a], self.exps[b])])
        self.binom = binom
        self.diff = np.where(le[:, :, None], self.exps[None, :, :] - self.exps[:, None, :], 0)
        fd = np.vectorize(lambda e: float(factorial(int(e))))(self.diff) if N else self.diff
        self.fdiff = np.prod(fd, axis=2) if N else np.zeros((0, 0))
        self._mul = None

    @property
    def mul_tensor(self) -> np.ndarray:
        """Dense tensor ``T[k, i, j] = 1`` iff ``e_i + e_j = e_k`` (truncated)."""
        if self._mul is None:
            N = self.size
            T = np.zeros((N, N, N))
            for i, a in enumerate(self.exps_t):
                for j, b in enumerate(self.exps_t):
                    k = self.index.get(tuple(x + y for x, y in zip(a, b)))
                    if k is not None:
                        T[k, i, j] = 1.0
            self._mul = T
        return self._mul


@lru_cache(maxsize=None)
def _basis(n: int, deg: int) -> _Basis:
    return _Basis(n, deg)


def _powers(basis: _Basis, h: np.ndarray) -> np.ndarray:
    """``P[b, a] = h^(a - b)`` where ``b <= a``, else 0."""
    h = np.asarray(h, dtype=float)
    with np.errstate(invalid="ignore"):
        vals = np.prod(np.where(basis.diff == 0, 1.0, h[None, None, :] ** basis.diff), axis=2)
    return np.where(basis.le, vals, 0.0)


def shift_matrix(n: int, deg: int, h: Sequence[float]) -> np.ndarray:
    """Matrix taking coefficients of ``P(y)`` to coefficients of ``P(y + h)``."""
    b = _basis(n, deg)
    return b.binom * _powers(b, np.asarray(h, dtype=float))


def deriv_matrix(n: int, deg: int, x: Sequence[float]) -> np.ndarray:
    """Matrix taking origin coefficients to the vector ``(d^alpha P(x))_alpha``."""
    b = _basis(n, deg)
    return b.fact[:, None] * shift_matrix(n, deg, x)


def transfer_matrix(n: int, deg: int, h: Sequence[float]) -> np.ndarray:
    """Derivative values at ``b' + h`` from derivative values at ``b'``.

    Exact for polynomials of degree ``<= deg``:
    ``d^a P(b'+h) = sum_{c >= a} d^c P(b') h^(c-a) / (c-a)!``.
    """
    b = _basis(n, deg)
    return np.where(b.le, _powers(b, np.asarray(h, dtype=float)) / b.fdiff, 0.0)


def trunc_mul(a: np.ndarray, b: np.ndarray, n: int, deg: int) -> np.ndarray:
    """Product of coefficient arrays truncated to degree ``deg`` (same center).

    Works on stacked arrays of shape ``(..., N)``.
    """
    T = _basis(n, deg).mul_tensor
    return np.einsum("kij,...i,...j->...k", T, a, b)


def trunc_reciprocal(a: np.ndarray, n: int, deg: int) -> np.ndarray:
    """Truncated power series of ``1 / A`` for a centered jet ``A`` with ``A(0) != 0``."""
    a = np.asarray(a, dtype=float)
    c0 = a[..., :1]
    if np.any(np.abs(c0) == 0.0):
        raise ZeroDivisionError("jet has zero constant term")
    u = a.copy()
    u[..., 0] = 0.0
    u = -u / c0
    out = np.zeros_like(a)
    out[..., 0] = 1.0
    term = out.copy()
    for _ in range(deg):
        term = trunc_mul(term, u, n, deg)
        out = out + term
    return out / c0


class Poly:
    """Real polynomial on R^n of degree ``<= degree_bound`` (origin monomial basis)."""

    __slots__ = ("n", "degree_bound", "coeffs")

    def __init__(self, n: int, degree_bound: int, coeffs=None):
        basis = _basis(n, degree_bound)
        if coeffs is None:
            c = np.zeros(basis.size)
        else:
            c = np.array(coeffs, dtype=float).reshape(-1)
            if c.shape != (basis.size,):
                raise ValueError(f"expected {basis.size} coefficients, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "degree_bound", degree_bound)
        object.__setattr__(self, "coeffs", c)

    def __setattr__(self, key, value):
        raise AttributeError("Poly is immutable")

    @classmethod
    def from_terms(cls, n: int, degree_bound: int, terms: Mapping[tuple, float]) -> "Poly":
        basis = _basis(n, degree_bound)
        c = np.zeros(basis.size)
        for alpha, v in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n:
                raise ValueError(f"multi-index {alpha} does not match dimension {n}")
            if order(alpha) > degree_bound:
                raise ValueError(f"term {alpha} exceeds degree bound {degree_bound}")
            c[basis.index[alpha]] += v
        return cls(n, degree_bound, c)

    @classmethod
    def constant(cls, n: int, degree_bound: int, value: float = 1.0) -> "Poly":
        c = np.zeros(_basis(n, degree_bound).size)
        c[0] = value
        return cls(n, degree_bound, c)

    @classmethod
    def from_centered(cls, n: int, degree_bound: int, centered, x) -> "Poly":
        """Build from coefficients in powers of ``(y - x)``."""
        S = shift_matrix(n, degree_bound, -np.asarray(x, dtype=float))
        return cls(n, degree_bound, S @ np.asarray(centered, dtype=float))

    @classmethod
    def from_derivatives(cls, n: int, degree_bound: int, derivs, x) -> "Poly":
        """Build from the values ``d^alpha P(x)`` listed in basis order."""
        b = _basis(n, degree_bound)
        return cls.from_centered(n, degree_bound, np.asarray(derivs, dtype=float) / b.fact, x)

    @property
    def basis(self) -> tuple[tuple[int, ...], ...]:
        return _basis(self.n, self.degree_bound).exps_t

    def _check(self, other: "Poly"):
        if not isinstance(other, Poly):
            raise TypeError(f"expected Poly, got {type(other).__name__}")
        if other.n != self.n or other.degree_bound != self.degree_bound:
            raise ValueError(
                f"dimension mismatch: (n={self.n}, deg={self.degree_bound}) vs "
                f"(n={other.n}, deg={other.degree_bound})"
            )

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n:
            raise ValueError(f"point has dimension {x.size}, polynomial has {self.n}")
        b = _basis(self.n, self.degree_bound)
        return float(np.prod(x[None, :] ** b.exps, axis=1) @ self.coeffs)

    def centered(self, x) -> np.ndarray:
        """Coefficients of this polynomial in powers of ``(y - x)``."""
        return shift_matrix(self.n, self.degree_bound, x) @ self.coeffs

    def derivatives_at(self, x) -> np.ndarray:
        """Vector of ``d^alpha P(x)`` for every basis multi-index."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n:
            raise ValueError(f"point has dimension {x.size}, polynomial has {self.n}")
        return deriv_matrix(self.n, self.degree_bound, x) @ self.coeffs

    def deriv_at(self, alpha: Sequence[int], x) -> float:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.n:
            raise ValueError(f"multi-index {alpha} does not match dimension {self.n}")
        if order(alpha) > self.degree_bound:
            return 0.0
        i = _basis(self.n, self.degree_bound).index[alpha]
        return float(self.derivatives_at(x)[i])

    def truncated(self, deg: int) -> "Poly":
        """Drop monomials of order > deg (origin-centered)."""
        src = _basis(self.n, self.degree_bound)
        dst = _basis(self.n, deg)
        c = np.zeros(dst.size)
        for a, v in zip(src.exps_t, self.coeffs):
            j = dst.index.get(a)
            if j is not None:
                c[j] = v
            elif v != 0.0:
                raise ValueError("truncation would drop nonzero terms; recenter first")
        return Poly(self.n, deg, c)

    def raised(self, deg: int) -> "Poly":
        """Same polynomial viewed in a larger degree bound."""
        if deg < self.degree_bound:
            raise ValueError("use truncated() to lower the degree bound")
        dst = _basis(self.n, deg)
        c = np.zeros(dst.size)
        for a, v in zip(self.basis, self.coeffs):
            c[dst.index[a]] = v
        return Poly(self.n, deg, c)

    def product(self, other: "Poly") -> "Poly":
        """Exact product, degree bound is the sum of both bounds."""
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        deg = self.degree_bound + other.degree_bound
        a = self.raised(deg).coeffs
        b = other.raised(deg).coeffs
        return Poly(self.n, deg, trunc_mul(a, b, self.n, deg))

    def __add__(self, other: "Poly") -> "Poly":
        self._check(other)
        return Poly(self.n, self.degree_bound, self.coeffs + other.coeffs)

    def __sub__(self, other: "Poly") -> "Poly":
        self._check(other)
        return Poly(self.n, self.degree_bound, self.coeffs - other.coeffs)

    def __neg__(self) -> "Poly":
        return Poly(self.n, self.degree_bound, -self.coeffs)

    def __mul__(self, s: float) -> "Poly":
        if isinstance(s, Poly):
            raise TypeError("use jet_mul or product for polynomial products")
        return Poly(self.n, self.degree_bound, float(s) * self.coeffs)

    __rmul__ = __mul__

    def allclose(self, other: "Poly", tol: float = TOL) -> bool:
        self._check(other)
        scale = max(1.0, float(np.max(np.abs(self.coeffs), initial=0.0)))
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= tol * scale)

    def __repr__(self):
        terms = [f"{v:+.6g}*{a}" for a, v in zip(self.basis, self.coeffs) if v != 0.0]
        return f"Poly(n={self.n}, deg<={self.degree_bound}: {' '.join(terms) or '0'})"


class VecPoly:
    """R^D-valued polynomial: a tuple of :class:`Poly` sharing ``n`` and degree bound."""

    __slots__ = ("components",)

    def __init__(self, components: Sequence[Poly]):
        comps = tuple(components)
        if not comps:
            raise ValueError("VecPoly needs at least one component")
        first = comps[0]
        for c in comps[1:]:
            first._check(c)
        object.__setattr__(self, "components", comps)

    def __setattr__(self, key, value):
        raise AttributeError("VecPoly is immutable")

    @classmethod
    def zeros(cls, n: int, degree_bound: int, D: int) -> "VecPoly":
        return cls([Poly(n, degree_bound) for _ in range(D)])

    @classmethod
    def from_matrix(cls, n: int, degree_bound: int, coeffs) -> "VecPoly":
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        return cls([Poly(n, degree_bound, row) for row in coeffs])

    @classmethod
    def from_derivatives(cls, n: int, degree_bound: int, derivs, x) -> "VecPoly":
        derivs = np.atleast_2d(np.asarray(derivs, dtype=float))
        return cls([Poly.from_derivatives(n, degree_bound, row, x) for row in derivs])

    @property
    def n(self) -> int:
        return self.components[0].n

    @property
    def degree_bound(self) -> int:
        return self.components[0].degree_bound

    @property
    def D(self) -> int:
        return len(self.components)

    @property
    def coeff_matrix(self) -> np.ndarray:
        return np.stack([c.coeffs for c in self.components])

    def _check(self, other: "VecPoly"):
        if not isinstance(other, VecPoly):
            raise TypeError(f"expected VecPoly, got {type(other).__name__}")
        if other.D != self.D:
            raise ValueError(f"D mismatch: {self.D} vs {other.D}")
        self.components[0]._check(other.components[0])

    def __call__(self, x) -> np.ndarray:
        return np.array([c(x) for c in self.components])

    def derivatives_at(self, x) -> np.ndarray:
        """Array ``(D, N)`` of ``d^alpha P_j(x)``."""
        M = deriv_matrix(self.n, self.degree_bound, np.asarray(x, dtype=float))
        return self.coeff_matrix @ M.T

    def deriv_at(self, alpha, x) -> np.ndarray:
        return np.array([c.deriv_at(alpha, x) for c in self.components])

    def __add__(self, other: "VecPoly") -> "VecPoly":
        self._check(other)
        return VecPoly([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "VecPoly") -> "VecPoly":
        self._check(other)
        return VecPoly([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "VecPoly":
        return VecPoly([-a for a in self.components])

    def __mul__(self, s: float) -> "VecPoly":
        return VecPoly([a * s for a in self.components])

    __rmul__ = __mul__

    def allclose(self, other: "VecPoly", tol: float = TOL) -> bool:
        self._check(other)
        return all(a.allclose(b, tol) for a, b in zip(self.components, other.components))

    def __repr__(self):
        return f"VecPoly({list(self.components)})"


class LiftedPoly(Poly):
    """Scalar polynomial on R^(n+D) of degree ``<= m``; the first ``n`` variables are x."""

    __slots__ = ()

    @property
    def n_plus_D(self) -> int:
        return self.n


def jet_mul(P: Poly, Q: Poly, x) -> Poly:
    """``P (.)_x Q``: the degree-bounded Taylor jet at ``x`` of the product ``PQ``."""
    P._check(Q)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != P.n:
        raise ValueError(f"point has dimension {x.size}, polynomials have {P.n}")
    n, d = P.n, P.degree_bound
    c = trunc_mul(P.centered(x), Q.centered(x), n, d)
    return type(P).from_centered(n, d, c, x)


def module_mul(R: Poly, P: VecPoly, x) -> VecPoly:
    """Action of the ring ``(P, (.)_x)`` on vector polynomials, componentwise."""
    if not isinstance(P, VecPoly):
        raise TypeError("module_mul expects a VecPoly")
    return VecPoly([jet_mul(R, Pj, x) for Pj in P.components])


DerivativeData = Union[Callable[[tuple], object], Mapping[tuple, object]]


def taylor_jet(F: DerivativeData, x, m: int, D: int = 1) -> VecPoly:
    """Degree ``m - 1`` Taylor polynomial at ``x`` of a function given by derivatives.

    ``F`` maps a multi-index ``alpha`` (tuple) to ``d^alpha F(x)``: either a
    mapping or a callable.  Values are scalars when ``D == 1`` or length-D
    sequences.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    deg = m - 1
    basis = _basis(n, deg)
    derivs = np.zeros((D, basis.size))
    for i, alpha in enumerate(basis.exps_t):
        try:
            v = F[alpha] if isinstance(F, Mapping) else F(alpha)
        except KeyError:
            v = None
        if v is None:
            raise ValueError(f"missing derivative data for multi-index {alpha}")
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if v.size != D:
            raise ValueError(f"derivative {alpha} has {v.size} components, expected {D}")
        derivs[:, i] = v
    return VecPoly.from_derivatives(n, deg, derivs, x)
