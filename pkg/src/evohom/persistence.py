"""Persistence barcodes of weighted flag filtrations over Z/2.

Dimension 0 uses union-find with the elder rule. Dimensions 1 and 2 reduce the
boundary matrices of the flag simplices with sparse columns and a low-pivot
table, clearing columns already known to be positive.

Only simplices with value strictly below the cap are built. At the cap the
complex is the full simplex, so every class still alive dies there; dropping
the cap-valued simplices and capping the survivors yields the same multiset
of bars while skipping most of the complex when many pairs sit at the cap.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import BudgetExceeded
from .filtration import WeightedFlagFiltration

DEFAULT_BUDGET = 50_000_000


def simplex_budget() -> int:
    env = os.environ.get("EVOHOM_BUDGET")
    return int(env) if env else DEFAULT_BUDGET


@dataclass(frozen=True, order=True)
class Bar:
    birth: float
    death: float
    essential: bool = field(default=False, compare=False)

    def __post_init__(self):
        if not self.birth <= self.death:
            raise ValueError(f"bar death {self.death} precedes birth {self.birth}")

    @property
    def length(self) -> float:
        return self.death - self.birth


@dataclass(frozen=True)
class Barcode:
    """Multiset of bars in one homology dimension; ``cap`` is the value essential bars die at."""

    dim: int
    bars: tuple = ()
    cap: float = math.inf

    def __len__(self) -> int:
        return len(self.bars)

    def __iter__(self):
        return iter(self.bars)

    def pairs(self) -> list[tuple[float, float]]:
        return [(b.birth, b.death) for b in self.bars]

    def as_array(self) -> np.ndarray:
        return np.array(self.pairs(), dtype=float).reshape(-1, 2)


def _barcode(dim: int, bars, cap: float) -> Barcode:
    kept = sorted(b for b in bars if b.death > b.birth)
    return Barcode(dim, tuple(kept), cap)


class _UnionFind:
    def __init__(self, birth):
        self.parent = list(range(len(birth)))
        self.birth = list(birth)

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root


def _active_edges(filt: WeightedFlagFiltration):
    """Edges ``(j, k, value)`` with ``j < k`` and value below the cap, in filtration order."""
    M = len(filt)
    if M < 2:
        return np.empty((0, 2), dtype=np.int64), np.empty(0)
    j, k = np.triu_indices(M, 1)
    vals = filt.edge_values[j, k]
    keep = vals < filt.cap
    j, k, vals = j[keep], k[keep], vals[keep]
    order = np.lexsort((k, j, vals))
    return np.stack((j[order], k[order]), axis=1), vals[order]


def _h0(filt: WeightedFlagFiltration, edges, evals):
    """Dimension-0 bars and the mask of edges that close a cycle (positive edges)."""
    fv = filt.vertex_values.tolist()
    uf = _UnionFind(fv)
    bars = []
    positive = np.zeros(len(edges), dtype=bool)
    for e, ((a, b), val) in enumerate(zip(edges.tolist(), evals.tolist())):
        ra, rb = uf.find(a), uf.find(b)
        if ra == rb:
            positive[e] = True
            continue
        # elder rule: the younger root dies; ties go to the smaller vertex id
        if (uf.birth[ra], ra) > (uf.birth[rb], rb):
            ra, rb = rb, ra
        bars.append(Bar(uf.birth[rb], val))
        uf.parent[rb] = ra
    for v in range(len(fv)):
        if uf.find(v) == v and fv[v] < filt.cap:
            bars.append(Bar(uf.birth[v], filt.cap, essential=True))
    return bars, positive


def persistence_h0(filt: WeightedFlagFiltration) -> Barcode:
    edges, evals = _active_edges(filt)
    bars, _ = _h0(filt, edges, evals)
    return _barcode(0, bars, filt.cap)


def _neighbor_masks(M: int, edges) -> list[int]:
    """Bitmask of higher-index neighbors for each vertex."""
    up = [0] * M
    for a, b in edges.tolist():
        up[a] |= 1 << b
    return up


def _bits(x: int):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def _count_extensions(cliques, up) -> int:
    total = 0
    for c in cliques:
        common = up[c[0]]
        for v in c[1:]:
            common &= up[v]
        total += common.bit_count()
    return total


def _extend(cliques, up):
    out = []
    for c in cliques:
        common = up[c[0]]
        for v in c[1:]:
            common &= up[v]
        out.extend(c + (w,) for w in _bits(common))
    return out


def _ordered(simplices, values):
    """Sort simplices by (value, lexicographic vertex tuple)."""
    if not simplices:
        return [], np.empty(0)
    arr = np.array(simplices, dtype=np.int64)
    keys = [arr[:, c] for c in range(arr.shape[1] - 1, -1, -1)] + [values]
    order = np.lexsort(keys)
    return [simplices[i] for i in order], values[order]


def _clique_values(simplices, fe) -> np.ndarray:
    if not simplices:
        return np.empty(0)
    arr = np.array(simplices, dtype=np.int64)
    val = np.full(len(arr), -np.inf)
    for a, b in combinations(range(arr.shape[1]), 2):
        val = np.maximum(val, fe[arr[:, a], arr[:, b]])
    return val


def _reduce(columns, skip):
    """Standard Z/2 column reduction.

    ``columns[j]`` is the sorted list of face indices of simplex ``j``. Returns the
    pivot table ``low -> j`` and the set of columns that reduced to zero.
    Columns in ``skip`` are known to reduce to zero (clearing).
    """
    pivot_of = {}
    reduced = {}
    zero = set(skip)
    for j, col in enumerate(columns):
        if j in skip:
            continue
        col = list(col)
        while col:
            low = col[-1]
            other = pivot_of.get(low)
            if other is None:
                break
            col = sorted(set(col).symmetric_difference(reduced[other]))
        if col:
            pivot_of[col[-1]] = j
            reduced[j] = col
        else:
            zero.add(j)
    return pivot_of, zero


def _boundary_columns(simplices, face_index) -> list[list[int]]:
    cols = []
    for s in simplices:
        faces = [face_index[s[:i] + s[i + 1 :]] for i in range(len(s))]
        faces.sort()
        cols.append(faces)
    return cols


def persistence_high(filt: WeightedFlagFiltration, max_dim: int | None = None, budget: int | None = None) -> list[Barcode]:
    """Barcodes of dimensions ``1..max_dim`` (``max_dim <= 2``)."""
    max_dim = filt.max_dim if max_dim is None else max_dim
    if max_dim > 2:
        raise ValueError("dimensions above 2 are not supported")
    if max_dim < 1:
        return []
    budget = simplex_budget() if budget is None else budget
    edges, evals = _active_edges(filt)
    _, positive_edges = _h0(filt, edges, evals)
    return _high_from_edges(filt, max_dim, budget, edges, evals, positive_edges)


def _high_from_edges(filt, max_dim, budget, edges, evals, positive_edges) -> list[Barcode]:
    M = len(filt)
    cap = filt.cap
    fe = filt.edge_values
    up = _neighbor_masks(M, edges)

    # simplices[d] in filtration order, values[d] aligned
    simplices = {1: [tuple(e) for e in edges.tolist()]}
    values = {1: np.asarray(evals, dtype=float)}
    required = 0
    for d in range(2, max_dim + 2):
        lower = simplices[d - 1]
        required += _count_extensions(lower, up)
        if required > budget:
            raise BudgetExceeded(_count_total(lower, up, d, max_dim, required), budget)
        found = _extend(lower, up)
        simplices[d], values[d] = _ordered(found, _clique_values(found, fe))

    index = {d: {s: i for i, s in enumerate(simplices[d])} for d in simplices}
    positive = {1: set(np.flatnonzero(positive_edges).tolist())}
    lows = {}
    cleared: set[int] = set()
    for d in range(max_dim + 1, 1, -1):
        cols = _boundary_columns(simplices[d], index[d - 1])
        pivot_of, zero = _reduce(cols, cleared)
        lows[d - 1] = pivot_of
        positive[d] = zero
        cleared = set(pivot_of)

    out = []
    for k in range(1, max_dim + 1):
        vk, vk1 = values[k], values[k + 1]
        bars = [Bar(float(vk[i]), float(vk1[j])) for i, j in lows[k].items()]
        bars += [Bar(float(vk[i]), cap, essential=True) for i in positive[k] if i not in lows[k]]
        out.append(_barcode(k, bars, cap))
    return out


def _count_total(lower, up, d, max_dim, so_far) -> int:
    """Exact simplex count for the budget error, counting without storing."""
    total = so_far
    if d < max_dim + 1:
        layer = lower
        for _ in range(d, max_dim + 1):
            layer = _extend(layer, up)
            total += _count_extensions(layer, up)
    return total


def barcodes(filt: WeightedFlagFiltration, max_dim: int | None = None, budget: int | None = None) -> list[Barcode]:
    """Barcodes of dimensions ``0..max_dim``, bars sorted by birth then death."""
    max_dim = filt.max_dim if max_dim is None else max_dim
    if len(filt) == 0:
        return [Barcode(k, (), filt.cap) for k in range(max_dim + 1)]
    edges, evals = _active_edges(filt)
    bars0, positive_edges = _h0(filt, edges, evals)
    out = [_barcode(0, bars0, filt.cap)]
    if max_dim >= 1:
        budget = simplex_budget() if budget is None else budget
        out += _high_from_edges(filt, max_dim, budget, edges, evals, positive_edges)
    return out


def rips_filtration(points, max_value: float = math.inf, max_dim: int = 2) -> WeightedFlagFiltration:
    """Vietoris-Rips filtration: vertices at 0, edges at Euclidean length capped at ``max_value``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        raise ValueError("points must be nonempty")
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1))
    if math.isinf(max_value):
        max_value = float(d.max()) if len(pts) > 1 else 0.0
    e = np.minimum(d, max_value)
    np.fill_diagonal(e, 0.0)
    return WeightedFlagFiltration(tuple(range(len(pts))), np.zeros(len(pts)), e, float(max_value), max_dim)
