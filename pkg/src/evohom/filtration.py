"""Trajectory-driven weighted flag filtration for one perturbation experiment.

Vertices enter when a node's deviation from the synchronized orbit first
reaches ``eps_p``; an edge enters once the area between the two nodes'
deviation curves over the rest of the run drops to ``eps_sync`` (close pairs),
or at the global sync time (pairs farther apart than ``eps_d``). Higher
simplices take the max over their faces and are never stored.

Integrals over ``[t, inf)`` are truncated at the last sample and evaluated
with the trapezoid rule as suffix sums. Crossing times are reported at the
first grid sample satisfying the condition, without interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FiltrationError, SimulationTooShort

# Relative slack on the eps_d comparison. Distances computed from rounded
# coordinates sit a few ulps off their exact value, which would otherwise
# split symmetric pairs (e.g. the sides of a regular polygon) across branches.
DISTANCE_RTOL = 1e-9


@dataclass(frozen=True)
class FiltrationParams:
    eps_p: float
    eps_sync: float
    eps_d: float

    def __post_init__(self):
        for name in ("eps_p", "eps_sync", "eps_d"):
            v = getattr(self, name)
            if not v >= 0:
                raise ValueError(f"{name} must be >= 0, got {v!r}")


@dataclass(frozen=True)
class WeightedFlagFiltration:
    """Vertex and edge values on a complete graph over ``nodes``.

    ``edge_values`` is symmetric with the vertex values on its diagonal.
    ``cap`` is the value at which the complex is complete (``t_sync`` for
    trajectory filtrations); essential classes are capped there.
    """

    nodes: tuple
    vertex_values: np.ndarray
    edge_values: np.ndarray
    cap: float
    max_dim: int = 2

    def __len__(self) -> int:
        return len(self.nodes)

    def shifted(self, c: float) -> "WeightedFlagFiltration":
        return WeightedFlagFiltration(
            self.nodes, self.vertex_values + c, self.edge_values + c, self.cap + c, self.max_dim
        )

    def relabeled(self, perm) -> "WeightedFlagFiltration":
        """Reorder vertices so that new vertex ``a`` is old vertex ``perm[a]``."""
        perm = np.asarray(perm, dtype=int)
        return WeightedFlagFiltration(
            tuple(self.nodes[p] for p in perm),
            self.vertex_values[perm],
            self.edge_values[np.ix_(perm, perm)],
            self.cap,
            self.max_dim,
        )


def tail_integrals(diffs: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Suffix trapezoid integrals of ``diffs`` along axis 0.

    ``out[m] = integral from times[m] to times[-1]``; ``out[-1] = 0``. Extra
    trailing axes are independent series. The result is non-increasing in ``m``
    exactly, since it is a cumulative sum of nonnegative terms.
    """
    d = np.asarray(diffs, dtype=float)
    t = np.asarray(times, dtype=float)
    if d.shape[0] != t.shape[0]:
        raise ValueError(f"grid mismatch: {d.shape[0]} samples vs {t.shape[0]} times")
    dt = np.diff(t).reshape((-1,) + (1,) * (d.ndim - 1))
    pieces = 0.5 * dt * (d[:-1] + d[1:])
    out = np.zeros_like(d)
    out[:-1] = np.cumsum(pieces[::-1], axis=0)[::-1]
    return out


def pair_crossings(values: np.ndarray, times: np.ndarray, thresholds) -> list[np.ndarray]:
    """For each threshold, the ``(M, M)`` matrix of first sample indices at which the
    pairwise tail integral of ``|u_j - u_k|`` is ``<= threshold``. Diagonal is 0."""
    v = np.asarray(values, dtype=float)
    S, M = v.shape
    out = [np.zeros((M, M), dtype=np.int64) for _ in thresholds]
    for j in range(M - 1):
        tails = tail_integrals(np.abs(v[:, j + 1 :] - v[:, j : j + 1]), times)
        for res, thr in zip(out, thresholds):
            # tails are non-increasing, so the count above threshold is the first index below it
            idx = (tails > thr).sum(axis=0)
            res[j, j + 1 :] = idx
            res[j + 1 :, j] = idx
    return out


def affected_set(values: np.ndarray, eps_p: float, perturbed: int | None = None) -> np.ndarray:
    """Nodes whose deviation reaches ``eps_p`` at some sample after ``t = 0``.

    The perturbed node is also judged on its initial sample, which carries the
    perturbation itself.
    """
    v = np.asarray(values, dtype=float)
    later = v[1:].max(axis=0) if v.shape[0] > 1 else np.full(v.shape[1], -np.inf)
    hit = later >= eps_p
    if perturbed is not None and v[0, perturbed] >= eps_p:
        hit[perturbed] = True
    return np.flatnonzero(hit)


def global_sync_time(values: np.ndarray, times: np.ndarray, eps_sync: float) -> float:
    """First grid time from which every pairwise tail integral is ``<= eps_sync / 2``.

    ``values`` holds only the affected nodes. Raises :class:`SimulationTooShort`
    if the condition holds only at the final sample.
    """
    (idx,) = pair_crossings(values, times, (0.5 * eps_sync,))
    return float(np.asarray(times)[_sync_index(idx, len(times))])


def _sync_index(half_idx: np.ndarray, n_samples: int) -> int:
    if half_idx.size == 0:
        return 0
    m = int(half_idx.max())
    if m >= n_samples - 1 and half_idx.shape[0] > 1:
        raise SimulationTooShort("global synchronization not reached before the end of the simulation")
    return m


def vertex_values(values: np.ndarray, times: np.ndarray, eps_p: float, t_sync: float) -> np.ndarray:
    """First grid time each node's deviation reaches ``eps_p``, but never later than ``t_sync``."""
    v = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    reached = v >= eps_p
    first = np.where(reached.any(axis=0), t[reached.argmax(axis=0)], np.inf)
    return np.minimum(first, t_sync)


def edge_values(
    close_idx: np.ndarray,
    times: np.ndarray,
    distances: np.ndarray,
    eps_d: float,
    vertex_vals: np.ndarray,
    t_sync: float,
) -> np.ndarray:
    """Edge values from per-pair crossing indices of the ``eps_sync`` tail condition.

    Pairs within ``eps_d`` (up to a relative ``DISTANCE_RTOL``) get ``max(crossing time, f(n_j), f(n_k))``; farther
    pairs get ``t_sync``. The diagonal carries the vertex values.
    """
    t = np.asarray(times, dtype=float)
    fv = np.asarray(vertex_vals, dtype=float)
    cross = t[close_idx]
    near = np.maximum(cross, np.maximum(fv[:, None], fv[None, :]))
    e = np.where(np.asarray(distances) <= eps_d * (1 + DISTANCE_RTOL), near, t_sync)
    np.fill_diagonal(e, fv)
    return e


def build_flag_filtration(
    vertex_vals, edge_vals, cap: float, max_dim: int = 2, nodes=None
) -> WeightedFlagFiltration:
    fv = np.asarray(vertex_vals, dtype=float).copy()
    fe = np.asarray(edge_vals, dtype=float).copy()
    M = len(fv)
    if fe.shape != (M, M):
        raise FiltrationError(f"edge matrix shape {fe.shape} does not match {M} vertices")
    np.fill_diagonal(fe, fv)
    if not np.array_equal(fe, fe.T):
        raise FiltrationError("edge values are not symmetric")
    if M and (fe < np.maximum(fv[:, None], fv[None, :])).any():
        raise FiltrationError("an edge enters before one of its vertices")
    if M and (fe.max() > cap or fv.min() < 0):
        raise FiltrationError("filtration values must lie in [0, cap]")
    nodes = tuple(range(M)) if nodes is None else tuple(int(n) for n in nodes)
    return WeightedFlagFiltration(nodes, fv, fe, float(cap), int(max_dim))


@dataclass(frozen=True)
class FiltrationInfo:
    affected: np.ndarray
    t_sync: float
    perturbed_forced: bool


def eh_filtration(
    scalars,
    distances: np.ndarray,
    params: FiltrationParams,
    perturbed: int | None = None,
    force_perturbed: bool = True,
    max_dim: int = 2,
) -> tuple[WeightedFlagFiltration, FiltrationInfo]:
    """Filtration for one experiment from all nodes' deviation curves.

    ``scalars`` has ``times`` and ``values`` of shape ``(S, N)``; ``distances``
    is the ``(N, N)`` embedding-space distance matrix. With
    ``force_perturbed`` the perturbed node is kept in the affected set even
    when its own deviation stays below ``eps_p``; ``info.perturbed_forced``
    records whether that happened.
    """
    times = np.asarray(scalars.times, dtype=float)
    allv = np.asarray(scalars.values, dtype=float)
    aff = affected_set(allv, params.eps_p, perturbed)
    forced = False
    if force_perturbed and perturbed is not None and perturbed not in aff:
        aff = np.union1d(aff, [perturbed])
        forced = True
    v = allv[:, aff]
    full_idx, half_idx = pair_crossings(v, times, (params.eps_sync, 0.5 * params.eps_sync))
    t_sync = float(times[_sync_index(half_idx, len(times))])
    fv = vertex_values(v, times, params.eps_p, t_sync)
    fe = edge_values(full_idx, times, np.asarray(distances)[np.ix_(aff, aff)], params.eps_d, fv, t_sync)
    filt = build_flag_filtration(fv, fe, t_sync, max_dim, nodes=aff)
    return filt, FiltrationInfo(affected=aff, t_sync=t_sync, perturbed_forced=forced)
