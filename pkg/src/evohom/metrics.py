"""Distances between barcodes and the distance-to-empty feature map.

Both distances are solved exactly. Each side is padded with one diagonal
surrogate per bar of the other side, so a partial matching becomes a perfect
matching on a square cost matrix: bar-to-bar costs ``Delta``, bar-to-own-
surrogate costs ``lambda``, surrogate-to-surrogate costs zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

P_VALUES = (math.inf, 1, 2)
FEATURE_NAMES = tuple(
    f"EH_{'inf' if math.isinf(p) else p}_{k}" for p in P_VALUES for k in range(3)
)
REGRESSION_FEATURES = ("EH_inf_0", "EH_inf_1", "EH_1_0", "EH_1_1", "EH_2_0", "EH_2_1")


def _bars(B) -> np.ndarray:
    if hasattr(B, "as_array"):
        arr = B.as_array()
    else:
        arr = np.asarray([tuple(b) for b in B], dtype=float).reshape(-1, 2)
    if not np.isfinite(arr).all():
        raise ValueError("barcodes must have finite endpoints; cap essential bars first")
    return arr


def delta(bar1, bar2) -> float:
    """L-infinity distance between two bars as points ``(birth, death)``."""
    return max(abs(bar2[0] - bar1[0]), abs(bar2[1] - bar1[1]))


def existence(bar) -> float:
    """Half-length of a bar: its distance to the nearest zero-length bar."""
    return (bar[1] - bar[0]) / 2.0


@dataclass(frozen=True)
class PartialMatching:
    pairs: tuple
    unmatched_left: tuple
    unmatched_right: tuple


def _cost_blocks(a: np.ndarray, b: np.ndarray):
    d = np.maximum(
        np.abs(a[:, None, 0] - b[None, :, 0]), np.abs(a[:, None, 1] - b[None, :, 1])
    ).reshape(len(a), len(b))
    return d, (a[:, 1] - a[:, 0]) / 2.0, (b[:, 1] - b[:, 0]) / 2.0


def _augmented(d, la, lb, fill):
    n1, n2 = d.shape
    C = np.full((n1 + n2, n2 + n1), fill)
    C[:n1, :n2] = d
    C[:n1, n2:][np.diag_indices(n1)] = la
    C[n1:, :n2][np.diag_indices(n2)] = lb
    C[n1:, n2:] = 0.0
    return C


def optimal_matching(B1, B2, p: float = 1.0) -> tuple[float, PartialMatching]:
    """p-Wasserstein distance and an optimal partial matching (``p`` finite, >= 1)."""
    if not (p >= 1 and math.isfinite(p)):
        raise ValueError("p must be a finite number >= 1; use bottleneck for p = inf")
    a, b = _bars(B1), _bars(B2)
    n1, n2 = len(a), len(b)
    if n1 + n2 == 0:
        return 0.0, PartialMatching((), (), ())
    d, la, lb = _cost_blocks(a, b)
    C = _augmented(d**p, la**p, lb**p, math.inf)
    rows, cols = linear_sum_assignment(C)
    total = float(C[rows, cols].sum())
    pairs = tuple((int(i), int(j)) for i, j in zip(rows, cols) if i < n1 and j < n2)
    left = tuple(sorted(set(range(n1)) - {i for i, _ in pairs}))
    right = tuple(sorted(set(range(n2)) - {j for _, j in pairs}))
    return total ** (1.0 / p), PartialMatching(pairs, left, right)


def wasserstein(B1, B2, p: float = 1.0) -> float:
    if math.isinf(p):
        return bottleneck(B1, B2)
    return optimal_matching(B1, B2, p)[0]


def bottleneck(B1, B2) -> float:
    """Exact bottleneck distance by binary search over the finite set of candidate costs."""
    a, b = _bars(B1), _bars(B2)
    n1, n2 = len(a), len(b)
    if n1 + n2 == 0:
        return 0.0
    d, la, lb = _cost_blocks(a, b)
    C = _augmented(d, la, lb, math.inf)
    candidates = np.unique(np.concatenate((d.ravel(), la, lb, [0.0])))
    size = n1 + n2

    def feasible(c: float) -> bool:
        allowed = csr_matrix((C <= c).astype(np.int8))
        match = maximum_bipartite_matching(allowed, perm_type="column")
        return bool((match >= 0).all()) and len(match) == size

    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def distance_to_empty(B, p: float) -> float:
    """Distance to the empty barcode; every bar must go unmatched."""
    a = _bars(B)
    lam = (a[:, 1] - a[:, 0]) / 2.0
    if len(lam) == 0:
        return 0.0
    if math.isinf(p):
        return float(lam.max())
    return float((lam**p).sum() ** (1.0 / p))


def eh_features(barcodes, p_values=P_VALUES) -> dict[str, float]:
    """Distance of each barcode (dims 0..2) to the empty barcode for every ``p``.

    Keys are ``EH_<p>_<k>`` with ``p`` in ``inf, 1, 2``; a missing dimension
    counts as the empty barcode.
    """
    by_dim = {}
    for k, B in enumerate(barcodes):
        by_dim[getattr(B, "dim", k)] = B
    out = {}
    for p in p_values:
        tag = "inf" if math.isinf(p) else str(int(p)) if float(p).is_integer() else str(p)
        for k in range(3):
            out[f"EH_{tag}_{k}"] = distance_to_empty(by_dim.get(k, ()), p)
    return out
