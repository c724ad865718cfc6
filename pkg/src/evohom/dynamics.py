"""Coupled Lorenz oscillators on a weighted graph Laplacian.

State arrays have shape ``(N, n)``: one row per node. The coupling term
``eps * (A kron Gamma) u`` is evaluated blockwise as ``eps * (A @ U) @ Gamma.T``
and never materialized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .errors import DisconnectedGraph, IntegrationDiverged, NotSynchronized

Rhs = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LorenzParams:
    """Rates of a single Lorenz node. Defaults are the protein configuration."""

    delta: float = 1.0
    gamma: float = 12.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        for name in ("delta", "gamma", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    def fixed_points(self) -> np.ndarray:
        """Equilibria of the uncoupled node: the origin, plus the symmetric pair when gamma > 1."""
        pts = [np.zeros(3)]
        if self.gamma > 1:
            r = math.sqrt(self.beta * (self.gamma - 1))
            pts += [np.array([r, r, self.gamma - 1]), np.array([-r, -r, self.gamma - 1])]
        return np.array(pts)


@dataclass(frozen=True)
class CoupledConfig:
    epsilon: float
    linking: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        lk = np.asarray(self.linking, dtype=float)
        if lk.ndim != 2 or lk.shape[0] != lk.shape[1]:
            raise ValueError(f"linking must be square, got shape {lk.shape}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        object.__setattr__(self, "linking", lk)

    @property
    def n(self) -> int:
        return self.linking.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution. ``states[m]`` is the state at ``times[m]``."""

    times: np.ndarray
    states: np.ndarray

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class ReferenceOrbit:
    """Sampled synchronized attractor of one node; a single sample for a fixed point."""

    samples: np.ndarray
    period_length: float
    h: float

    @property
    def is_fixed_point(self) -> bool:
        return self.period_length == 0

    @property
    def state(self) -> np.ndarray:
        """State used as the synchronized initial condition."""
        return self.samples[-1]


@dataclass(frozen=True)
class ScalarTrajectories:
    """Per-node distance to the reference orbit; ``values`` has shape ``(S, N)``."""

    times: np.ndarray
    values: np.ndarray


def lorenz_rhs(state: np.ndarray, params: LorenzParams) -> np.ndarray:
    """Lorenz vector field, vectorized over leading axes of ``state[..., 3]``."""
    u = np.asarray(state, dtype=float)
    u1, u2, u3 = u[..., 0], u[..., 1], u[..., 2]
    return np.stack(
        (
            params.delta * (u2 - u1),
            u1 * (params.gamma - u3) - u2,
            u1 * u2 - params.beta * u3,
        ),
        axis=-1,
    )


def build_coupling_matrix(points, mu: float, kappa: float) -> np.ndarray:
    """Weighted Laplacian ``A_ij = exp(-(|r_i - r_j| / mu)**kappa)``, ``A_ii = -sum_{l != i} A_il``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("points must be nonempty")
    if not (mu > 0 and kappa > 0):
        raise ValueError("mu and kappa must be positive")
    d = pairwise_distances(pts)
    a = np.exp(-((d / mu) ** kappa))
    np.fill_diagonal(a, 0.0)
    np.fill_diagonal(a, -a.sum(axis=1))
    return a


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def coupled_rhs(state: np.ndarray, g: Rhs, A: np.ndarray, cfg: CoupledConfig) -> np.ndarray:
    """``G(u) + eps (A kron Gamma) u`` for a state of shape ``(N, n)``."""
    u = np.asarray(state, dtype=float)
    if u.ndim != 2 or A.shape != (u.shape[0], u.shape[0]) or u.shape[1] != cfg.n:
        raise ValueError(f"dimension mismatch: state {u.shape}, A {A.shape}, n={cfg.n}")
    out = g(u)
    if cfg.epsilon:
        # rows of A sum to zero, so shifting by a common state changes nothing
        # in exact arithmetic and makes the synchronized case exactly zero
        out = out + cfg.epsilon * ((A @ (u - u[0])) @ cfg.linking.T)
    return out


def make_coupled_rhs(g: Rhs, A: np.ndarray, cfg: CoupledConfig) -> Rhs:
    A = np.asarray(A, dtype=float)
    return lambda u: coupled_rhs(u, g, A, cfg)


def rk4_step(rhs: Rhs, u: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(u)
    k2 = rhs(u + (0.5 * h) * k1)
    k3 = rhs(u + (0.5 * h) * k2)
    k4 = rhs(u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _time_grid(t0: float, t_end: float, h: float) -> np.ndarray:
    span = t_end - t0
    n = round(span / h)
    if abs(n * h - span) <= 1e-9 * h:
        times = t0 + h * np.arange(n + 1)
    else:
        n = math.floor(span / h)
        times = np.append(t0 + h * np.arange(n + 1), t_end)
    times[-1] = t_end
    return times


def integrate_rk4(rhs: Rhs, initial, t0: float, t_end: float, h: float) -> Trajectory:
    """Classical RK4 on a uniform grid; the final step is shortened to land on ``t_end``."""
    if not h > 0:
        raise ValueError("h must be positive")
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    times = _time_grid(t0, t_end, h)
    u = np.array(initial, dtype=float)
    states = np.empty((len(times),) + u.shape)
    states[0] = u
    for m in range(1, len(times)):
        u = rk4_step(rhs, u, times[m] - times[m - 1])
        if not np.isfinite(u).all():
            raise IntegrationDiverged(float(times[m]))
        states[m] = u
    return Trajectory(times=times, states=states)


def find_reference_orbit(
    g: Callable[[np.ndarray, LorenzParams], np.ndarray],
    params: LorenzParams,
    A: np.ndarray,
    cfg: CoupledConfig,
    burn_in: float = 50.0,
    window: float = 10.0,
    h: float = 0.01,
    fp_tol: float = 1e-6,
    seed=None,
    spread: float = 0.0,
) -> ReferenceOrbit:
    """Integrate the coupled system from a deterministic seed and sample node 0's attractor.

    All nodes start at ``seed`` (default ``(1, ..., 1)``); a nonzero ``spread``
    offsets node ``j`` by ``spread * j / N`` so that the burn-in genuinely tests
    synchronization. Raises :class:`NotSynchronized` when nodes still disagree
    by more than ``fp_tol`` after the burn-in.
    """
    A = np.asarray(A, dtype=float)
    N = A.shape[0]
    base = np.ones(cfg.n) if seed is None else np.asarray(seed, dtype=float)
    u0 = np.tile(base, (N, 1))
    if spread:
        u0 = u0 + spread * (np.arange(N) / N)[:, None]
    rhs = make_coupled_rhs(lambda u: g(u, params), A, cfg)

    warm = integrate_rk4(rhs, u0, 0.0, burn_in, h).states[-1]
    deviation = float(np.abs(warm - warm[0]).max())
    if deviation > fp_tol:
        raise NotSynchronized(f"node deviation {deviation:.3g} exceeds {fp_tol:g} after burn-in {burn_in:g}")

    tail = integrate_rk4(rhs, warm, burn_in, burn_in + window, h).states[:, 0, :]
    spread_per_coord = tail.max(axis=0) - tail.min(axis=0)
    if (spread_per_coord < fp_tol).all():
        return ReferenceOrbit(samples=tail[-1:].copy(), period_length=0.0, h=h)
    return ReferenceOrbit(samples=tail.copy(), period_length=float(window), h=h)


def perturb(sync_state: np.ndarray, i: int, multiplier: float = 2.0, component: int = 2) -> np.ndarray:
    """Copy of ``sync_state`` with component ``component`` of node ``i`` scaled by ``multiplier``."""
    u = np.array(sync_state, dtype=float)
    if not 0 <= i < u.shape[0]:
        raise IndexError(f"node index {i} out of range for {u.shape[0]} nodes")
    u[i, component] *= multiplier
    return u


def transform_trajectories(traj: Trajectory, orbit: ReferenceOrbit) -> ScalarTrajectories:
    """Distance of every node state to the nearest stored orbit sample."""
    states = np.asarray(traj.states, dtype=float)
    if len(orbit.samples) == 0:
        raise ValueError("orbit has no samples")
    if len(orbit.samples) == 1:
        values = np.linalg.norm(states - orbit.samples[0], axis=-1)
    else:
        tree = cKDTree(orbit.samples)
        dist, _ = tree.query(states.reshape(-1, states.shape[-1]))
        values = dist.reshape(states.shape[:-1])
    return ScalarTrajectories(times=np.asarray(traj.times), values=values)


def _round_robin(n: int):
    """Yield rounds of disjoint index pairs covering every pair exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    for _ in range(m - 1):
        pairs = []
        for k in range(m // 2):
            p, q = players[k], players[m - 1 - k]
            if p < n and q < n:
                pairs.append((min(p, q), max(p, q)))
        yield pairs
        players = [players[0], players[-1]] + players[1:-1]


def jacobi_eigenvalues(A: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Uses the round-robin ordering so each round rotates ``N/2`` disjoint index
    pairs at once; rotations on disjoint pairs commute, so a round is a single
    orthogonal similarity transform applied with vectorized row/column updates.
    Iterates until the largest off-diagonal magnitude is below ``tol`` times the
    matrix scale (``max(1, max|A|)``).
    """
    a = np.array(A, dtype=float)
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()
    scale = max(1.0, float(np.abs(a).max()))
    rounds = [np.array(r, dtype=int).reshape(-1, 2) for r in _round_robin(n)]
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if np.abs(a[off_mask]).max() <= tol * scale:
            break
        for pairs in rounds:
            if len(pairs) == 0:
                continue
            p, q = pairs[:, 0], pairs[:, 1]
            apq = a[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            p, q, apq = p[active], q[active], apq[active]
            tau = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    return a.diagonal().copy()


def laplacian_spectrum(A: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric coupling matrix in descending order."""
    a = np.asarray(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("coupling matrix must be square")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise ValueError("coupling matrix is not symmetric")
    return np.sort(jacobi_eigenvalues(0.5 * (a + a.T)))[::-1]


def critical_coupling(A: np.ndarray, lyapunov: float, tol: float = 1e-10) -> float:
    """Smallest coupling strength for stable synchronization with identity linking.

    ``eps0 = L_g / (-lambda_2)`` where ``lambda_2`` is the second-largest
    eigenvalue of the (negative semidefinite) coupling matrix.
    """
    lam = laplacian_spectrum(A)
    if len(lam) < 2:
        raise DisconnectedGraph("need at least two nodes for a second eigenvalue")
    lam2 = float(lam[1])
    if lam2 >= -tol * max(1.0, float(np.abs(lam).max())):
        raise DisconnectedGraph(f"second eigenvalue {lam2:.3g} is not negative; coupling graph is disconnected")
    return lyapunov / -lam2


def estimate_lyapunov(
    g: Callable[[np.ndarray, object], np.ndarray],
    params,
    initial,
    t_total: float,
    h: float = 0.01,
    renorm_interval: int = 10,
    d0: float = 1e-8,
    transient: float = 0.0,
) -> float:
    """Largest Lyapunov exponent by two-trajectory renormalization (Benettin).

    A companion trajectory starts ``d0`` away along the diagonal direction; every
    ``renorm_interval`` steps the separation is measured, its log growth
    accumulated, and the companion pulled back to distance ``d0``.
    """
    base = np.atleast_1d(np.asarray(initial, dtype=float)).copy()
    rhs = lambda u: g(u, params)
    for _ in range(int(round(transient / h))):
        base = rk4_step(rhs, base, h)
    if not np.isfinite(base).all():
        raise IntegrationDiverged(transient)
    direction = np.ones_like(base) / math.sqrt(base.size)
    # separation is relative to the state size so it stays resolvable in floating point
    target = d0 * max(1.0, float(np.linalg.norm(base)))
    pair = np.stack((base, base + target * direction))
    steps = int(round(t_total / h))
    log_sum = 0.0
    elapsed = 0.0
    done = 0
    while done < steps:
        k = min(renorm_interval, steps - done)
        for _ in range(k):
            pair = rk4_step(rhs, pair, h)
        done += k
        if not np.isfinite(pair).all():
            raise IntegrationDiverged(transient + done * h)
        sep = pair[1] - pair[0]
        dist = float(np.linalg.norm(sep))
        if dist == 0.0:
            raise ArithmeticError("companion trajectory collapsed onto the base trajectory")
        log_sum += math.log(dist / target)
        elapsed += k * h
        target = d0 * max(1.0, float(np.linalg.norm(pair[0])))
        pair[1] = pair[0] + (target / dist) * sep
    return log_sum / elapsed
