"""Pure numpy simplex iterations; fallback for ``_simplex_core``.

Dantzig pricing with a Harris two-pass ratio test, switching to Bland's rule
after a run of degenerate pivots so that cycling is impossible.
"""
from __future__ import annotations

import numpy as np

OPTIMAL, UNBOUNDED, PIVOT_CAP = 0, 1, 2
DEGENERATE_RUN = 50
HARRIS_TOL = 1e-9


def pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] = T[r] / T[r, c]
    f = T[:, c].copy()
    f[r] = 0.0
    nz = np.nonzero(f)[0]
    if nz.size:
        T[nz] -= f[nz, None] * T[r][None, :]


def simplex_loop(T: np.ndarray, basis: np.ndarray, n_enter: int, tol: float, max_pivots: int):
    m = T.shape[0] - 1
    pivots = 0
    degenerate = 0
    while True:
        rc = T[m, :n_enter]
        if degenerate >= DEGENERATE_RUN:
            cand = np.flatnonzero(rc < -tol)
            if cand.size == 0:
                return OPTIMAL, pivots
            j = cand[0]
        else:
            j = int(np.argmin(rc)) if n_enter else 0
            if n_enter == 0 or rc[j] >= -tol:
                return OPTIMAL, pivots
        if pivots >= max_pivots:
            return PIVOT_CAP, pivots
        col = T[:m, j]
        pos = col > tol
        if not pos.any():
            return UNBOUNDED, pivots
        b = np.maximum(T[:m, -1], 0.0)
        ratios = np.full(m, np.inf)
        ratios[pos] = b[pos] / col[pos]
        best = ratios.min()
        if degenerate >= DEGENERATE_RUN:
            ties = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + best))
            i = ties[np.argmin(basis[ties])]
        else:
            # Harris: within the feasibility slack, prefer the largest pivot element
            bound = np.min((b[pos] + HARRIS_TOL) / col[pos])
            cand = np.flatnonzero(ratios <= bound)
            i = cand[np.argmax(col[cand])]
        degenerate = degenerate + 1 if best <= 1e-12 else 0
        pivot(T, i, j)
        basis[i] = j
        rhs = T[:m, -1]
        rhs[rhs < 0.0] = 0.0
        pivots += 1
