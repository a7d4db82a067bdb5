"""Clustering trees of finite point sets, cluster norms and the dual cluster norm."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.sparse.csgraph import connected_components

from .polyjet import _basis
from .whitney import PointSet, WhitneyField


class ClusteringError(ValueError):
    """Structural violation of a clustering tree; ``node`` is the offending node id."""

    def __init__(self, message: str, node: Optional[int] = None):
        super().__init__(message if node is None else f"node {node}: {message}")
        self.node = node


@dataclass(frozen=True)
class Node:
    id: int
    level: int
    members: tuple[int, ...]  # sorted indices into the base point set
    parent: Optional[int]
    children: tuple[int, ...]
    ref: int  # index of the reference point x_V


@dataclass(frozen=True)
class Trunk:
    nodes: tuple[int, ...]  # node ids from the root down to level height-1


class ClusterTree:
    """Rooted tree of subsets of ``base`` with reference points.

    Immutable; ``achieved_constant`` is filled in by :func:`build_clustering`
    (``None`` for hand-assembled trees until validated).
    """

    def __init__(self, base: PointSet, nodes: Sequence[Node], achieved_constant: Optional[float] = None):
        self.base = base
        self.nodes = tuple(nodes)
        self.achieved_constant = achieved_constant
        depth = max(v.level for v in self.nodes)
        self.levels = tuple(tuple(v.id for v in self.nodes if v.level == l) for l in range(depth + 1))

    @classmethod
    def from_nodes(cls, base, spec: Sequence[tuple], refs: Optional[Sequence[int]] = None) -> "ClusterTree":
        """Assemble a tree from ``(members, parent_id)`` pairs without validation.

        Node ids follow the order of ``spec``; levels come from parent depth.
        Missing references default to the lexicographically smallest member.
        """
        if not isinstance(base, PointSet):
            base = PointSet(base)
        kids: dict[int, list[int]] = {i: [] for i in range(len(spec))}
        levels = []
        for i, (members, parent) in enumerate(spec):
            if parent is None:
                levels.append(0)
            else:
                if parent >= i:
                    raise ClusteringError("parents must precede children", i)
                kids[parent].append(i)
                levels.append(levels[parent] + 1)
        nodes = []
        for i, (members, parent) in enumerate(spec):
            mem = tuple(sorted(int(j) for j in members))
            r = refs[i] if refs is not None else _lex_min(base, mem)
            nodes.append(Node(i, levels[i], mem, parent, tuple(kids[i]), int(r)))
        return cls(base, nodes)

    @property
    def root(self) -> Node:
        return self.nodes[self.levels[0][0]]

    @property
    def height(self) -> int:
        return len(self.levels) - 1

    def node(self, i: int) -> Node:
        return self.nodes[i]

    def point(self, i: int) -> np.ndarray:
        return self.base.points[i]

    def path_to(self, idx: int) -> list[Node]:
        """Nodes containing point ``idx``, root first."""
        out = []
        v = self.root
        while True:
            out.append(v)
            if not v.children:
                return out
            v = next(self.nodes[c] for c in v.children if idx in self.nodes[c].members)

    def to_dict(self) -> dict:
        return {
            "points": self.base.points.tolist(),
            "achieved_constant": self.achieved_constant,
            "nodes": [
                {"id": v.id, "level": v.level, "members": list(v.members), "parent": v.parent,
                 "children": list(v.children), "ref": v.ref}
                for v in self.nodes
            ],
        }

    def __repr__(self):
        return f"ClusterTree(|S|={len(self.base)}, height={self.height}, nodes={len(self.nodes)})"


def _lex_min(base: PointSet, members: Iterable[int]) -> int:
    return min(members, key=lambda i: tuple(base.points[i]))


def _diam(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    return float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=2)))


def build_clustering(S) -> ClusterTree:
    """Split every non-singleton node into connected components at scale ``diam(V) / (2|S|)``."""
    if not isinstance(S, PointSet):
        S = PointSet(S)
    k = len(S)
    pts = S.points
    all_idx = tuple(range(k))
    nodes: list[Node] = []
    kids: dict[int, list[int]] = {}
    frontier = [0]
    nodes_raw = [(all_idx, None, _lex_min(S, all_idx), 0)]
    while True:
        level_nodes = [nodes_raw[i] for i in frontier]
        if all(len(m) == 1 for m, *_ in level_nodes):
            break
        nxt = []
        for nid in frontier:
            members, _, ref, level = nodes_raw[nid]
            if len(members) == 1:
                parts = [members]
            else:
                sub = pts[list(members)]
                d = np.linalg.norm(sub[:, None] - sub[None], axis=2)
                thr = _diam(sub) / (2.0 * k)
                _, lab = connected_components(d <= thr, directed=False)
                parts = [tuple(m for m, l in zip(members, lab) if l == c) for c in range(lab.max() + 1)]
                parts.sort(key=lambda p: tuple(pts[_lex_min(S, p)]))
            for p in parts:
                child_ref = ref if ref in p else _lex_min(S, p)
                nodes_raw.append((p, nid, child_ref, level + 1))
                kids.setdefault(nid, []).append(len(nodes_raw) - 1)
                nxt.append(len(nodes_raw) - 1)
        frontier = nxt
    for i, (members, parent, ref, level) in enumerate(nodes_raw):
        nodes.append(Node(i, level, members, parent, tuple(kids.get(i, ())), ref))
    tree = ClusterTree(S, nodes)
    c = validate_clustering(tree)
    return ClusterTree(S, nodes, achieved_constant=c)


def _check_structure(T: ClusterTree) -> None:
    k = len(T.base)
    everything = set(range(k))
    if T.levels[0] != (T.root.id,) or set(T.root.members) != everything:
        raise ClusteringError("root must be the whole set (T1)", T.root.id)
    for v in T.nodes:
        if not v.members:
            raise ClusteringError("empty node", v.id)
        if v.ref not in v.members:
            raise ClusteringError("reference point outside its node", v.id)
        if v.children:
            union: list[int] = []
            for c in v.children:
                w = T.nodes[c]
                if w.parent != v.id or w.level != v.level + 1:
                    raise ClusteringError("inconsistent parent/child links", c)
                union.extend(w.members)
            if len(union) != len(set(union)) or set(union) != set(v.members):
                raise ClusteringError("children do not partition their parent (T2)", v.id)
            if not any(T.nodes[c].ref == v.ref for c in v.children):
                raise ClusteringError("reference point not inherited by a child", v.id)
    counts = []
    for l, ids in enumerate(T.levels):
        seen: list[int] = []
        for i in ids:
            seen.extend(T.nodes[i].members)
        if len(seen) != len(set(seen)) or set(seen) != everything:
            raise ClusteringError(f"level {l} is not a partition of S (T3)", ids[0])
        counts.append(len(ids))
    for i in T.levels[-1]:
        v = T.nodes[i]
        if len(v.members) != 1:
            raise ClusteringError("leaves must be singletons (T3)", v.id)
    for v in T.nodes:
        if not v.children and v.level != T.height:
            raise ClusteringError("leaf above the last level (T3)", v.id)
    for l in range(1, len(counts)):
        if counts[l] <= counts[l - 1]:
            raise ClusteringError(f"node count does not increase at level {l} (T4)", T.levels[l][0])


def validate_clustering(T: ClusterTree) -> float:
    """Largest separation constant in (0, 1] achieved by the reference families.

    Raises :class:`ClusteringError` on any structural violation.
    """
    _check_structure(T)
    pts = T.base.points
    c = 1.0
    for l in range(T.height):
        fam = [np.array([pts[T.nodes[w].ref] for w in T.nodes[v].children]) for v in T.levels[l]]
        refs_next = sorted(T.nodes[w].ref for w in T.levels[l + 1])
        got = sorted(T.nodes[w].ref for v in T.levels[l] for w in T.nodes[v].children)
        if got != refs_next or len(set(got)) != len(got):
            raise ClusteringError(f"reference families do not partition level {l + 1}", T.levels[l][0])
        for a, A in enumerate(fam):
            dA = _diam(A)
            if dA == 0.0:
                continue
            d = np.linalg.norm(A[:, None] - A[None], axis=2)
            c = min(c, float(d[~np.eye(len(A), dtype=bool)].min()) / dA)
            for b, B in enumerate(fam):
                if b != a:
                    c = min(c, float(np.linalg.norm(A[:, None] - B[None], axis=2).min()) / dA)
    if c <= 0.0:
        raise ClusteringError("reference families are not separated", None)
    return c


def restrict_tree(T: ClusterTree, keep: Sequence[int]) -> tuple[ClusterTree, list[int]]:
    """Clustering of ``S' = S[keep]`` induced by ``T``.

    Nodes are intersected with ``S'``; empty nodes vanish and levels that no
    longer refine their predecessor are collapsed.  References are re-derived
    top-down: inherit the parent's when present, else keep the old one when
    present, else take the lexicographically smallest member.  Returns the
    new tree and ``keep`` in the order used for its base.
    """
    keep = sorted(set(int(i) for i in keep))
    if not keep:
        raise ValueError("cannot restrict to the empty set")
    pos = {old: new for new, old in enumerate(keep)}
    base = T.base.subset(keep)
    # per level: list of (members in new indexing, old ref, old node id)
    levels = []
    for ids in T.levels:
        lev = []
        for i in ids:
            v = T.nodes[i]
            mem = tuple(pos[j] for j in v.members if j in pos)
            if mem:
                lev.append((mem, pos.get(v.ref), i))
        levels.append(lev)
    kept = [levels[0]]
    for lev in levels[1:]:
        if len(lev) > len(kept[-1]):
            kept.append(lev)
    if len(kept[-1]) != len(keep):
        kept.append([((j,), j, None) for j in range(len(keep))])
    nodes: list[Node] = []
    kids: dict[int, list[int]] = {}
    spec = []
    prev: list[int] = []
    for l, lev in enumerate(kept):
        cur = []
        for mem, old_ref, _ in lev:
            if l == 0:
                parent = None
                ref = old_ref if old_ref is not None else _lex_min(base, mem)
            else:
                parent = next(p for p in prev if set(mem) <= set(spec[p][0]))
                pref = spec[parent][2]
                if pref in mem:
                    ref = pref
                elif old_ref is not None:
                    ref = old_ref
                else:
                    ref = _lex_min(base, mem)
            spec.append((mem, parent, ref, l))
            if parent is not None:
                kids.setdefault(parent, []).append(len(spec) - 1)
            cur.append(len(spec) - 1)
        prev = cur
    for i, (mem, parent, ref, l) in enumerate(spec):
        nodes.append(Node(i, l, tuple(sorted(mem)), parent, tuple(kids.get(i, ())), ref))
    tree = ClusterTree(base, nodes)
    return ClusterTree(base, nodes, validate_clustering(tree)), keep


# --- reference maps ---------------------------------------------------------

PointLike = Union[int, Sequence[float], np.ndarray]


def _index(T: ClusterTree, x: PointLike) -> int:
    if isinstance(x, (int, np.integer)):
        if not 0 <= int(x) < len(T.base):
            raise ValueError(f"index {x} outside the point set")
        return int(x)
    x = np.asarray(x, dtype=float).reshape(-1)
    hit = np.flatnonzero(np.all(T.base.points == x[None, :], axis=1))
    if hit.size == 0:
        raise ValueError(f"point {x.tolist()} is not in S")
    return int(hit[0])


def ref_index(T: ClusterTree, i: int) -> int:
    """Index of ``ref(x_i)``: reference of the deepest node containing ``x_i`` as a non-reference."""
    if i == T.root.ref:
        raise ValueError("ref is undefined at the root reference point")
    for v in reversed(T.path_to(i)):
        if v.ref != i:
            return v.ref
    raise AssertionError("unreachable")


def owner_node(T: ClusterTree, i: int) -> Node:
    """``U(x_i)``: the shallowest node whose reference point is ``x_i``."""
    for v in T.path_to(i):
        if v.ref == i:
            return v
    raise AssertionError("leaf references are their own points")


def ref_of(T: ClusterTree, x: PointLike) -> np.ndarray:
    return T.point(ref_index(T, _index(T, x)))


def owner_of(T: ClusterTree, x: PointLike) -> Node:
    return owner_node(T, _index(T, x))


# --- trunks -----------------------------------------------------------------


def trunks(T: ClusterTree) -> list[Trunk]:
    """All directed paths from the root to level ``height - 1``."""
    if T.height < 1:
        return []
    out = []

    def walk(v: Node, path: tuple[int, ...]):
        path = path + (v.id,)
        if v.level == T.height - 1:
            out.append(Trunk(path))
            return
        for c in v.children:
            walk(T.nodes[c], path)

    walk(T.root, ())
    return out


def branch_nodes(T: ClusterTree, trunk: Trunk) -> list[int]:
    """Nodes adjacent to the trunk: children of trunk nodes that are not on it."""
    on = set(trunk.nodes)
    return [c for v in trunk.nodes for c in T.nodes[v].children if c not in on]


# --- norms ------------------------------------------------------------------


def cluster_norm(T: ClusterTree, W: WhitneyField) -> float:
    """max(weighted differences along ``x -> ref(x)``, derivative sup at ``x_S``)."""
    if len(W.base) != len(T.base) or not np.allclose(W.base.points, T.base.points):
        raise ValueError("field and tree live on different point sets")
    E = W.cross_derivatives()  # E[i, l] = derivatives of P^{x_l} at x_i
    root = T.root.ref
    best = float(np.abs(E[root, root]).max())
    orders = _basis(W.n, W.m - 1).orders
    for i in range(len(T.base)):
        if i == root:
            continue
        r = ref_index(T, i)
        dist = float(np.linalg.norm(T.point(i) - T.point(r)))
        q = np.abs(E[i, i] - E[i, r]).max(axis=0) / dist ** (W.m - orders)
        best = max(best, float(q.max()))
    return best


def dual_cluster_norm(T: ClusterTree, xi) -> float:
    """Weighted l1 sum of node aggregates evaluated on the scaled monomial basis."""
    from .dualred import aggregate

    root = T.root.ref
    total = float(np.abs(aggregate(xi, T.root.members, at=T.point(root)).coeffs).sum())
    orders = _basis(T.base.n, xi.m - 1).orders
    for i in range(len(T.base)):
        if i == root:
            continue
        r = ref_index(T, i)
        U = owner_node(T, i)
        w = float(np.linalg.norm(T.point(i) - T.point(r))) ** (xi.m - orders)
        c = aggregate(xi, U.members, at=T.point(i)).coeffs
        total += float((np.abs(c) * w[None, :]).sum())
    return total
