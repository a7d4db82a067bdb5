# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex iterations on a dense tableau.

Mirrors ``_simplex_py.simplex_loop`` pivot for pivot.
"""
from libc.math cimport fabs, INFINITY

cdef enum:
    OPTIMAL = 0
    UNBOUNDED = 1
    PIVOT_CAP = 2
    DEGENERATE_RUN = 50

cdef double HARRIS_TOL = 1e-9


cdef inline void _pivot(double[:, ::1] T, Py_ssize_t r, Py_ssize_t c) nogil:
    cdef Py_ssize_t m1 = T.shape[0]
    cdef Py_ssize_t w = T.shape[1]
    cdef Py_ssize_t i, k
    cdef double p = T[r, c]
    cdef double f
    for k in range(w):
        T[r, k] = T[r, k] / p
    for i in range(m1):
        if i == r:
            continue
        f = T[i, c]
        if f != 0.0:
            for k in range(w):
                T[i, k] = T[i, k] - f * T[r, k]


def pivot(double[:, ::1] T, Py_ssize_t r, Py_ssize_t c):
    with nogil:
        _pivot(T, r, c)


def simplex_loop(double[:, ::1] T, Py_ssize_t[::1] basis, Py_ssize_t n_enter,
                 double tol, Py_ssize_t max_pivots):
    """Pivot until optimal, unbounded or the pivot cap.

    Dantzig pricing with a Harris ratio test; Bland's rule after
    ``DEGENERATE_RUN`` degenerate pivots.

    ``T`` has constraint rows ``0..m-1`` and the reduced-cost row ``m``; the
    last column is the right-hand side.  Returns ``(status, pivots)``.
    """
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef Py_ssize_t pivots = 0
    cdef Py_ssize_t i, j, enter, leave
    cdef Py_ssize_t degenerate = 0
    cdef double a, b, r, best, bound, lim, low
    cdef int status
    with nogil:
        while True:
            enter = -1
            if degenerate >= DEGENERATE_RUN:
                for j in range(n_enter):
                    if T[m, j] < -tol:
                        enter = j
                        break
            else:
                low = -tol
                for j in range(n_enter):
                    if T[m, j] < low:
                        low = T[m, j]
                        enter = j
            if enter < 0:
                status = OPTIMAL
                break
            if pivots >= max_pivots:
                status = PIVOT_CAP
                break
            best = INFINITY
            bound = INFINITY
            for i in range(m):
                a = T[i, enter]
                if a > tol:
                    b = T[i, rhs] if T[i, rhs] > 0.0 else 0.0
                    r = b / a
                    if r < best:
                        best = r
                    r = (b + HARRIS_TOL) / a
                    if r < bound:
                        bound = r
            if best == INFINITY:
                status = UNBOUNDED
                break
            leave = -1
            if degenerate >= DEGENERATE_RUN:
                lim = best + 1e-12 * (1.0 + best)
                for i in range(m):
                    a = T[i, enter]
                    if a > tol:
                        b = T[i, rhs] if T[i, rhs] > 0.0 else 0.0
                        if b / a <= lim and (leave < 0 or basis[i] < basis[leave]):
                            leave = i
            else:
                for i in range(m):
                    a = T[i, enter]
                    if a > tol:
                        b = T[i, rhs] if T[i, rhs] > 0.0 else 0.0
                        if b / a <= bound and (leave < 0 or a > T[leave, enter]):
                            leave = i
            if best <= 1e-12:
                degenerate += 1
            else:
                degenerate = 0
            _pivot(T, leave, enter)
            basis[leave] = enter
            for i in range(m):
                if T[i, rhs] < 0.0:
                    T[i, rhs] = 0.0
            pivots += 1
    return status, pivots
