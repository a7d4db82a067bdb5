"""Compiled vs numpy simplex kernels on random LPs and selection LPs.

    python3 benchmarks/bench_simplex.py [--reps 3] [--seed 0]

Both backends run the same pivot sequence, so pivot counts and optimal values
must agree exactly; only wall time differs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from whitneyfp import kernels
from whitneyfp.convexlp import LPProblem, lp_solve
from whitneyfp.selection import random_instance, selection_norm_primal


def random_lp(rng: np.random.Generator, nvar: int, nrow: int) -> LPProblem:
    A = rng.normal(size=(nrow, nvar))
    x0 = rng.uniform(-1, 1, nvar)
    b = A @ x0 + rng.uniform(0.1, 1.0, nrow)
    box = np.vstack([np.eye(nvar), -np.eye(nvar)])
    return LPProblem(rng.normal(size=nvar), np.vstack([A, box]), np.concatenate([b, np.full(2 * nvar, 10.0)]))


def _time(fn, reps: int) -> float:
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(reps: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    cases = [(f"random {v}x{r}", random_lp(rng, v, r)) for v, r in [(5, 10), (12, 20), (30, 60), (60, 120)]]
    for size in (4, 6):
        I = random_instance(np.random.default_rng(seed + size), "halfspaces", 2, 2, 2, size)
        cases.append((f"selection |S|={size}", I))
    rows = []
    for name, case in cases:
        solve = (lambda c=case: selection_norm_primal(c).value) if not isinstance(case, LPProblem) \
            else (lambda c=case: lp_solve(c).value)
        out = {}
        for backend in ("python", "cython"):
            try:
                kernels.use_backend(backend)
            except RuntimeError:
                continue
            value = solve()
            out[backend] = (value, _time(solve, reps))
        rows.append({"case": name, **{f"{k}_s": v[1] for k, v in out.items()},
                     "agree": len({round(v[0], 9) for v in out.values()}) == 1})
    kernels.use_backend("cython" if kernels._simplex_core is not None else "python")
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rows = run(args.reps, args.seed)
    print(f"{'case':<22}{'python [s]':>12}{'cython [s]':>12}{'speedup':>9}  agree")
    for r in rows:
        py, cy = r.get("python_s", float("nan")), r.get("cython_s", float("nan"))
        print(f"{r['case']:<22}{py:>12.5f}{cy:>12.5f}{py / cy:>9.1f}  {r['agree']}")


if __name__ == "__main__":
    main()
