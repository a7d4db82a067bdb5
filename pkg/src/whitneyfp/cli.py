"""Command-line harness: instance generation, solvers and machine-readable reports.

Exit codes: 0 success, 1 input error, 2 infeasible instance, 3 numerical failure.
Every JSON report carries ``"schema": 1``, the tool version and the SHA-256 of
the input file; ``--no-timing`` zeroes wall times so output is byte-stable.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .clustering import build_clustering, validate_clustering
from .convexlp import LPProblem, Polytope, lp_solve
from .dualred import reduce_with_clustering, support_bound
from .selection import (FAMILIES, FLAVORS, InfeasibleError, NumericalError, SelectionInstance, finiteness_ratio,
                        fiber_function, ksharp, random_instance, selection_norm_dual, selection_norm_primal)
from .shapefield import DELTA_MAX, canonical_shape_field, convexity_check, leibniz_bound
from .whitney import PointSet

SCHEMA = 1
EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3
CSV_COLUMNS = ("schema", "instance_id", "size", "k", "value_full", "value_best_subset", "ratio",
               "subset_bitmask", "wall_time_ms", "version", "instance_sha256")


class InputError(ValueError):
    pass


# --- serialization -----------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def constraint_to_json(K: Polytope, kind: Optional[str], D: int) -> dict:
    if kind == "singleton":
        return {"type": "singleton", "data": {"point": K.b[:D]}}
    if kind == "box":
        return {"type": "box", "data": {"lo": -K.b[D:], "hi": K.b[:D]}}
    return {"type": "halfspaces", "data": {"A": K.A, "b": K.b}}


def constraint_from_json(obj: dict) -> tuple[Polytope, str]:
    try:
        kind, data = obj["type"], obj["data"]
        if kind == "singleton":
            return Polytope.point(data["point"]), kind
        if kind == "box":
            lo, hi = np.asarray(data["lo"], dtype=float), np.asarray(data["hi"], dtype=float)
            if lo.shape != hi.shape:
                raise InputError("box bounds differ in length")
            return Polytope.box(lo, hi), kind
        if kind == "halfspaces":
            return Polytope(np.asarray(data["A"], dtype=float), np.asarray(data["b"], dtype=float)), kind
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed constraint: {exc}") from None
    raise InputError(f"unknown constraint type {kind!r}")


def instance_to_json(I: SelectionInstance, seed: Optional[int] = None, index: Optional[int] = None) -> dict:
    kinds = I.kinds or ("halfspaces",) * len(I.S)
    doc = {"schema": SCHEMA, "n": I.n, "m": I.m, "D": I.D, "flavor": I.flavor,
           "points": I.S.points,
           "constraints": [constraint_to_json(K, k, I.D) for K, k in zip(I.constraints, kinds)]}
    if seed is not None:
        doc["seed"] = seed
    if index is not None:
        doc["index"] = index
    return doc


def instance_from_json(doc: dict) -> SelectionInstance:
    """Validate and build; raises :class:`InputError` or ``InfeasibleError``."""
    try:
        n, m, D = int(doc["n"]), int(doc["m"]), int(doc["D"])
        pts = np.asarray(doc["points"], dtype=float)
        cons = doc["constraints"]
        flavor = doc.get("flavor", "norm")
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed instance: {exc}") from None
    if min(n, m, D) < 1:
        raise InputError("n, m, D must be >= 1")
    if pts.ndim != 2 or pts.shape[1] != n or len(pts) == 0:
        raise InputError("points must be a non-empty list of length-n coordinates")
    if len(cons) != len(pts):
        raise InputError(f"{len(pts)} points but {len(cons)} constraints")
    if len({tuple(p) for p in pts.tolist()}) != len(pts):
        raise InputError("points must be distinct")
    if flavor not in FLAVORS:
        raise InputError(f"flavor must be one of {FLAVORS}")
    parsed = [constraint_from_json(c) for c in cons]
    try:
        return SelectionInstance(n, m, D, PointSet(pts), tuple(K for K, _ in parsed), flavor,
                                 tuple(k for _, k in parsed))
    except InfeasibleError:
        raise
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _read_json(path: str) -> tuple[dict, str]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top-level JSON object expected")
    return doc, _sha256(raw)


def load_instance(path: str, flavor: Optional[str] = None) -> tuple[SelectionInstance, str]:
    doc, digest = _read_json(path)
    I = instance_from_json(doc)
    return (I.with_flavor(flavor) if flavor else I), digest


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise InputError(f"cannot write {out}: {exc}") from None
    else:
        sys.stdout.write(text)


def _report(command: str, digest: Optional[str], inputs: dict, outputs: dict) -> dict:
    return {"schema": SCHEMA, "tool": "whitneyfp", "version": __version__, "command": command,
            "instance_sha256": digest, "inputs": inputs, "outputs": outputs}


# --- commands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.count < 1:
        raise InputError("--count must be >= 1")
    out = Path(args.out) if args.out else Path(".")
    single = args.count == 1 and out.suffix == ".json"
    if not single:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"cannot create {out}: {exc}") from None
    for idx in range(args.count):
        rng = np.random.default_rng([args.seed, idx])
        I = random_instance(rng, args.family, args.n, args.m, args.D, args.size, args.flavor or "norm")
        text = dumps(instance_to_json(I, args.seed, idx))
        target = out if single else out / f"{args.family}_{args.seed}_{idx:04d}.json"
        _emit(text, str(target))
    return EXIT_OK


def cmd_norm(args) -> int:
    I, digest = load_instance(args.instance, args.flavor)
    primal = selection_norm_primal(I)
    dual = selection_norm_dual(I)
    outputs = {"value": primal.value, "dual_value": dual.dual_value,
               "gap": abs(primal.value - dual.dual_value),
               "field_derivatives": primal.field.own_derivatives(),
               "certificate": dual.certificate.coeffs}
    inputs = {"instance": Path(args.instance).name, "flavor": I.flavor, "size": len(I.S)}
    _emit(dumps(_report("norm", digest, inputs, outputs)), args.out)
    return EXIT_OK


def ratio_row(instance_id: str, I: SelectionInstance, k: int, parallel: int, digest: str, timing: bool = True):
    t0 = time.perf_counter()
    res = finiteness_ratio(I, k, parallel=parallel)
    ms = (time.perf_counter() - t0) * 1000.0 if timing else 0.0
    row = {"schema": SCHEMA, "instance_id": instance_id, "size": len(I.S), "k": k,
           "value_full": res.value_full, "value_best_subset": res.value_best, "ratio": res.ratio,
           "subset_bitmask": res.mask, "wall_time_ms": round(ms, 3), "version": __version__,
           "instance_sha256": digest}
    return row, res


def _csv_text(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: (repr(float(v)) if isinstance(v, float) else v) for c, v in r.items()})
    return buf.getvalue()


def cmd_ratio(args) -> int:
    I, digest = load_instance(args.instance, args.flavor)
    k = args.k if args.k is not None else ksharp(I.m, I.n, I.D)
    if k < 1:
        raise InputError("--k must be >= 1")
    row, res = ratio_row(Path(args.instance).stem, I, k, args.parallel, digest, timing=not args.no_timing)
    _emit(_csv_text(CSV_COLUMNS, [row]), args.out)
    if args.subsets:
        rows = [{"subset_bitmask": r.mask, "value": r.value,
                 "wall_time_ms": 0.0 if args.no_timing else round(r.ms, 3)}
                for r in sorted(res.rows, key=lambda r: r.mask)]
        _emit(_csv_text(("subset_bitmask", "value", "wall_time_ms"), rows), args.subsets)
    return EXIT_OK


def cmd_reduce(args) -> int:
    I, digest = load_instance(args.instance, args.flavor)
    dual = selection_norm_dual(I)
    xi = dual.certificate
    phi = fiber_function(I)
    res = reduce_with_clustering(xi, phi)
    eta = res.eta
    outputs = {
        "dual_value": dual.dual_value,
        "support": res.support,
        "support_size": len(res.support),
        "bound": support_bound(I.dimP),
        "within_bound": len(res.support) <= support_bound(I.dimP),
        "sum_conservation_error": float(np.abs(xi.total().coeffs - eta.total().coeffs).max()),
        "phi_conservation_error": abs(float(phi.values(xi).sum() - phi.values(eta).sum())),
        "inflation": res.inflation,
        "steps": len(res.steps),
        "eta": eta.coeffs,
    }
    inputs = {"instance": Path(args.instance).name, "flavor": I.flavor, "size": len(I.S)}
    _emit(dumps(_report("reduce", digest, inputs, outputs)), args.out)
    return EXIT_OK


def cmd_cluster(args) -> int:
    doc, digest = _read_json(args.instance)
    try:
        pts = np.asarray(doc["points"], dtype=float)
        S = PointSet(pts)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read points: {exc}") from None
    T = build_clustering(S)
    c = validate_clustering(T)
    outputs = {"tree": T.to_dict(), "validated_constant": c, "required_constant": 1.0 / (2 * len(S)),
               "height": T.height}
    inputs = {"instance": Path(args.instance).name, "size": len(S)}
    _emit(dumps(_report("cluster", digest, inputs, outputs)), args.out)
    return EXIT_OK


def cmd_convexity(args) -> int:
    I, digest = load_instance(args.instance)
    G = canonical_shape_field(I)
    bound = leibniz_bound(I.n, I.m)
    C_w = args.cw if args.cw is not None else float(bound)
    rep = convexity_check(G, C_w, args.delta_max, args.samples, args.seed, lifted=args.lifted)
    outputs = rep.to_dict()
    outputs["leibniz_bound"] = bound
    inputs = {"instance": Path(args.instance).name, "seed": args.seed, "samples": args.samples,
              "delta_max": args.delta_max, "C_w": C_w, "lifted": args.lifted}
    _emit(dumps(_report("convexity", digest, inputs, outputs)), args.out)
    return EXIT_OK if rep.passed else EXIT_NUMERICAL


def cmd_lp(args) -> int:
    doc, digest = _read_json(args.instance)
    try:
        P = LPProblem(doc["c"], doc["A"], doc["b"], tuple(doc.get("row_kinds", ())),
                      tuple(doc.get("var_kinds", ())), doc.get("sense", "max"))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed LP: {exc}") from None
    sol = lp_solve(P)
    outputs = {"status": sol.status, "value": sol.value, "dual_value": sol.dual_value,
               "x": sol.x, "y": sol.y, "pivots": sol.pivots}
    inputs = {"instance": Path(args.instance).name, "variables": P.c.size, "rows": P.b.size, "sense": P.sense}
    _emit(dumps(_report("lp", digest, inputs, outputs)), args.out)
    if sol.status == "infeasible":
        return EXIT_INFEASIBLE
    if sol.status == "failed":
        return EXIT_NUMERICAL
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="whitneyfp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate random instances")
    g.add_argument("--family", choices=FAMILIES, default="box")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=1)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--D", type=int, default=1)
    g.add_argument("--size", type=int, default=5)
    g.add_argument("--flavor", choices=FLAVORS)
    g.add_argument("--out", help="directory, or a .json file when --count is 1")
    g.set_defaults(func=cmd_gen)

    def instance_cmd(name, func, help_, flavor=True):
        s = sub.add_parser(name, help=help_)
        s.add_argument("instance")
        if flavor:
            s.add_argument("--flavor", choices=FLAVORS)
        s.add_argument("--out")
        s.set_defaults(func=func)
        return s

    instance_cmd("norm", cmd_norm, "selection norm, primal and dual")
    r = instance_cmd("ratio", cmd_ratio, "finiteness ratio over subsets of size k")
    r.add_argument("--k", type=int)
    r.add_argument("--parallel", type=int, default=1)
    r.add_argument("--subsets", help="also write the per-subset sweep CSV here")
    r.add_argument("--no-timing", action="store_true")
    instance_cmd("reduce", cmd_reduce, "support reduction of the optimal dual certificate")
    instance_cmd("cluster", cmd_cluster, "clustering tree of the points", flavor=False)
    c = instance_cmd("convexity", cmd_convexity, "convexity check of the canonical shape field", flavor=False)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--samples", type=int, default=1000)
    c.add_argument("--cw", type=float)
    c.add_argument("--delta-max", type=float, default=DELTA_MAX)
    c.add_argument("--lifted", action="store_true")
    instance_cmd("lp", cmd_lp, "solve an LP given as JSON {c, A, b, row_kinds, var_kinds, sense}", flavor=False)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
