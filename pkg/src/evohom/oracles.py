"""Brute-force reference computations used by the test suite and ``evohom selftest``.

These are deliberately naive and share no code with the optimized paths.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def naive_barcodes(vertex_values, edge_values, cap: float, max_dim: int = 2) -> dict[int, list[tuple[float, float]]]:
    """Barcodes from a dense Z/2 reduction over every simplex of the complete complex.

    Simplex values are the max over all vertex and edge values they contain.
    Bars of length zero are dropped; unpaired classes die at ``cap``.
    """
    fv = np.asarray(vertex_values, dtype=float)
    fe = np.asarray(edge_values, dtype=float)
    M = len(fv)
    simplices = []
    for size in range(1, max_dim + 3):
        for s in itertools.combinations(range(M), size):
            val = max([fv[v] for v in s] + [fe[a, b] for a, b in itertools.combinations(s, 2)])
            simplices.append((val, size - 1, s))
    simplices.sort()
    pos = {s: i for i, (_, _, s) in enumerate(simplices)}
    n = len(simplices)
    D = np.zeros((n, n), dtype=np.uint8)
    for j, (_, dim, s) in enumerate(simplices):
        if dim > 0:
            for face in itertools.combinations(s, dim):
                D[pos[face], j] = 1
    low = [-1] * n
    owner = {}
    for j in range(n):
        while True:
            nz = np.flatnonzero(D[:, j])
            if len(nz) == 0:
                break
            lj = int(nz[-1])
            if lj in owner:
                D[:, j] ^= D[:, owner[lj]]
            else:
                owner[lj] = j
                low[j] = lj
                break
    out = {k: [] for k in range(max_dim + 1)}
    paired = set()
    for j in range(n):
        if low[j] >= 0:
            i = low[j]
            paired.update((i, j))
            b, d = simplices[i][0], simplices[j][0]
            dim = simplices[i][1]
            if d > b and dim <= max_dim:
                out[dim].append((b, d))
    for i, (val, dim, _) in enumerate(simplices):
        if i not in paired and dim <= max_dim and cap > val:
            out[dim].append((val, cap))
    return {k: sorted(v) for k, v in out.items()}


def _delta(a, b) -> float:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def _lam(a) -> float:
    return (a[1] - a[0]) / 2.0


def partial_bijections(n1: int, n2: int):
    """Every partial bijection as a tuple of (i, j) pairs."""
    for k in range(min(n1, n2) + 1):
        for left in itertools.combinations(range(n1), k):
            for right in itertools.permutations(range(n2), k):
                yield tuple(zip(left, right))


def brute_wasserstein(B1, B2, p: float) -> float:
    B1, B2 = [tuple(b) for b in B1], [tuple(b) for b in B2]
    best = math.inf
    for theta in partial_bijections(len(B1), len(B2)):
        used1 = {i for i, _ in theta}
        used2 = {j for _, j in theta}
        if math.isinf(p):
            cost = max(
                [_delta(B1[i], B2[j]) for i, j in theta]
                + [_lam(B1[i]) for i in range(len(B1)) if i not in used1]
                + [_lam(B2[j]) for j in range(len(B2)) if j not in used2]
                + [0.0]
            )
        else:
            cost = (
                sum(_delta(B1[i], B2[j]) ** p for i, j in theta)
                + sum(_lam(B1[i]) ** p for i in range(len(B1)) if i not in used1)
                + sum(_lam(B2[j]) ** p for j in range(len(B2)) if j not in used2)
            ) ** (1.0 / p)
        best = min(best, cost)
    return best


def brute_bottleneck(B1, B2) -> float:
    return brute_wasserstein(B1, B2, math.inf)


def random_flag_filtration(rng: np.random.Generator, M: int, far_fraction: float = 0.0):
    """Random monotone vertex/edge values in [0, 1]; a fraction of edges sits at the cap 1."""
    fv = rng.uniform(0, 1, size=M)
    fe = np.zeros((M, M))
    for a, b in itertools.combinations(range(M), 2):
        if rng.uniform() < far_fraction:
            v = 1.0
        else:
            v = max(fv[a], fv[b], rng.uniform(0, 1))
        fe[a, b] = fe[b, a] = v
    np.fill_diagonal(fe, fv)
    return fv, fe
