"""Protein structures, the per-residue perturbation pipeline, and B-factor evaluation."""
from __future__ import annotations

import gzip
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from .errors import EvohomError, InputError, PDBParseError, ResidueError, SimulationTooShort, UndefinedCorrelation
from .filtration import FiltrationParams, eh_filtration
from .metrics import FEATURE_NAMES, REGRESSION_FEATURES, eh_features
from .persistence import Barcode, barcodes

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Structures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Residue:
    chain: str
    seq: int
    icode: str
    name: str
    position: tuple
    b_factor: float | None = None

    @property
    def key(self) -> tuple:
        return (self.chain, self.seq, self.icode)

    @property
    def label(self) -> str:
        return f"{self.seq}{self.icode}".strip()


@dataclass(frozen=True)
class ProteinModel:
    residues: tuple
    index: int = 1

    def __len__(self) -> int:
        return len(self.residues)

    @property
    def positions(self) -> np.ndarray:
        return np.array([r.position for r in self.residues], dtype=float)

    @property
    def b_factors(self) -> np.ndarray:
        return np.array([np.nan if r.b_factor is None else r.b_factor for r in self.residues], dtype=float)

    def chains(self) -> list[str]:
        return list(dict.fromkeys(r.chain for r in self.residues))

    def select_chain(self, chain: str) -> "ProteinModel":
        return ProteinModel(tuple(r for r in self.residues if r.chain == chain), self.index)


def _field(line: str, lo: int, hi: int, lineno: int, what: str, default=None) -> float:
    text = line[lo:hi].strip()
    if not text:
        if default is not None:
            return default
        raise PDBParseError(f"missing {what}", lineno)
    try:
        return float(text)
    except ValueError:
        raise PDBParseError(f"malformed {what} {text!r}", lineno) from None


def parse_pdb(text: str) -> list[ProteinModel]:
    """Alpha-carbon residues from PDB text, one :class:`ProteinModel` per MODEL block.

    Alternate locations keep the highest occupancy (first wins ties). HETATM
    records are ignored.
    """
    models: list[ProteinModel] = []
    current: dict[tuple, tuple[float, Residue]] = {}
    model_index = 1
    in_model = False

    def flush():
        if current:
            models.append(ProteinModel(tuple(res for _, res in current.values()), model_index))

    for lineno, line in enumerate(text.splitlines(), 1):
        record = line[:6]
        if record.startswith("MODEL"):
            flush()
            current = {}
            in_model = True
            try:
                model_index = int(line[10:14].strip() or line[5:].split()[0])
            except (ValueError, IndexError):
                model_index = len(models) + 1
        elif record.startswith("ENDMDL"):
            flush()
            current = {}
            in_model = False
            model_index = len(models) + 1
        elif record == "ATOM  " and line[12:16].strip() == "CA":
            x = _field(line, 30, 38, lineno, "x coordinate")
            y = _field(line, 38, 46, lineno, "y coordinate")
            z = _field(line, 46, 54, lineno, "z coordinate")
            occ = _field(line, 54, 60, lineno, "occupancy", default=1.0)
            b = line[60:66].strip()
            bfac = _field(line, 60, 66, lineno, "B-factor") if b else None
            try:
                seq = int(line[22:26])
            except ValueError:
                raise PDBParseError(f"malformed residue number {line[22:26]!r}", lineno) from None
            res = Residue(
                chain=line[21].strip() if len(line) > 21 else "",
                seq=seq,
                icode=line[26].strip() if len(line) > 26 else "",
                name=line[17:20].strip(),
                position=(x, y, z),
                b_factor=bfac,
            )
            prev = current.get(res.key)
            if prev is None or occ > prev[0]:
                current[res.key] = (occ, res)
    if in_model or current:
        flush()
    if not models:
        raise PDBParseError("no alpha-carbon ATOM records found")
    return models


def read_structure(path) -> list[ProteinModel]:
    path = Path(path)
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rt") as fh:
                text = fh.read()
        else:
            text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    return parse_pdb(text)


# ---------------------------------------------------------------------------
# Per-residue pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EHConfig:
    """Parameter bundle for one perturbation experiment.

    ``eps_p = None`` means a tenth of the perturbed coordinate's synchronized
    magnitude.
    """

    lorenz: dyn.LorenzParams = dyn.LorenzParams()
    epsilon: float = 0.12
    linking: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    mu: float = 8.0
    kappa: float = 2.0
    h: float = 0.01
    multiplier: float = 2.0
    eps_p: float | None = None
    eps_sync: float = 0.1
    eps_d: float = 8.0
    max_dim: int = 2
    t_end: float = 10.0
    max_doublings: int = 8
    burn_in: float = 50.0
    window: float = 10.0
    fp_tol: float = 1e-6
    budget: int | None = None

    def coupled(self) -> dyn.CoupledConfig:
        return dyn.CoupledConfig(self.epsilon, np.array(self.linking, dtype=float))

    def filtration_params(self, sync_state: np.ndarray) -> FiltrationParams:
        eps_p = 0.1 * abs(float(sync_state[2])) if self.eps_p is None else self.eps_p
        return FiltrationParams(eps_p, self.eps_sync, self.eps_d)


@dataclass
class PreparedSystem:
    """Everything shared by the experiments on one structure."""

    points: np.ndarray
    distances: np.ndarray
    A: np.ndarray
    orbit: dyn.ReferenceOrbit

    @property
    def sync_state(self) -> np.ndarray:
        return np.tile(self.orbit.state, (len(self.points), 1))


@dataclass
class EHResult:
    node: int
    barcodes: list
    features: dict
    t_sync: float
    affected: tuple
    perturbed_forced: bool = False
    warnings: list = field(default_factory=list)

    def feature_row(self) -> list[float]:
        return [self.features[name] for name in FEATURE_NAMES]


def prepare_system(points, cfg: EHConfig) -> PreparedSystem:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise InputError("need a nonempty (N, d) array of points")
    A = dyn.build_coupling_matrix(pts, cfg.mu, cfg.kappa)
    orbit = dyn.find_reference_orbit(
        dyn.lorenz_rhs, cfg.lorenz, A, cfg.coupled(), cfg.burn_in, cfg.window, cfg.h, cfg.fp_tol
    )
    return PreparedSystem(pts, dyn.pairwise_distances(pts), A, orbit)


def _extend(rhs, traj: dyn.Trajectory, t_end: float, h: float) -> dyn.Trajectory:
    more = dyn.integrate_rk4(rhs, traj.states[-1], float(traj.times[-1]), t_end, h)
    return dyn.Trajectory(
        np.concatenate((traj.times, more.times[1:])), np.concatenate((traj.states, more.states[1:]))
    )


def simulate_perturbation(system: PreparedSystem, i: int, cfg: EHConfig, t_end: float | None = None) -> dyn.Trajectory:
    rhs = dyn.make_coupled_rhs(lambda u: dyn.lorenz_rhs(u, cfg.lorenz), system.A, cfg.coupled())
    u0 = dyn.perturb(system.sync_state, i, cfg.multiplier)
    return dyn.integrate_rk4(rhs, u0, 0.0, cfg.t_end if t_end is None else t_end, cfg.h)


def _empty_result(i: int, cap: float, max_dim: int, warning: str) -> EHResult:
    bcs = [Barcode(k, (), cap) for k in range(max_dim + 1)]
    return EHResult(i, bcs, eh_features(bcs), cap, (), False, [warning])


def run_experiment(system: PreparedSystem, i: int, cfg: EHConfig, variants=None) -> list[EHResult]:
    """Perturb node ``i`` and compute EH barcodes for each filtration-parameter variant.

    ``variants`` is a list of :class:`FiltrationParams`; by default the single
    set implied by ``cfg``. The simulation is shared by all variants and its
    horizon doubles (at most ``cfg.max_doublings`` times) until every variant
    reaches global synchronization within the first half of the run, so that
    the truncated tail integrals no longer depend on the horizon.
    """
    sync = system.sync_state
    variants = variants or [cfg.filtration_params(sync[i])]
    u0 = dyn.perturb(sync, i, cfg.multiplier)
    if np.array_equal(u0, sync):
        msg = f"perturbing node {i} leaves the synchronized state unchanged; affected set is empty"
        log.warning(msg)
        return [_empty_result(i, 0.0, cfg.max_dim, msg) for _ in variants]

    rhs = dyn.make_coupled_rhs(lambda u: dyn.lorenz_rhs(u, cfg.lorenz), system.A, cfg.coupled())
    traj = dyn.integrate_rk4(rhs, u0, 0.0, cfg.t_end, cfg.h)
    horizon = cfg.t_end
    for attempt in range(cfg.max_doublings + 1):
        scalars = dyn.transform_trajectories(traj, system.orbit)
        try:
            built = [
                eh_filtration(scalars, system.distances, fp, perturbed=i, max_dim=cfg.max_dim) for fp in variants
            ]
            # tails are truncated at the horizon; insist on as much settled time after sync as before it
            if max(info.t_sync for _, info in built) > horizon / 2:
                raise SimulationTooShort(f"t_sync beyond half the horizon t={horizon:g}")
            break
        except SimulationTooShort:
            if attempt == cfg.max_doublings:
                raise SimulationTooShort(
                    f"no global synchronization within t={horizon:g} after {cfg.max_doublings} doublings"
                ) from None
            horizon *= 2
            traj = _extend(rhs, traj, horizon, cfg.h)

    results = []
    for filt, info in built:
        bcs = barcodes(filt, cfg.max_dim, cfg.budget)
        warnings = []
        if info.perturbed_forced:
            warnings.append(f"node {i} kept in its own affected set below eps_p")
        results.append(
            EHResult(
                node=i,
                barcodes=bcs,
                features=eh_features(bcs),
                t_sync=info.t_sync,
                affected=tuple(int(a) for a in info.affected),
                perturbed_forced=info.perturbed_forced,
                warnings=warnings,
            )
        )
    return results


def residue_eh(model_or_points, i: int, cfg: EHConfig = EHConfig(), system: PreparedSystem | None = None) -> EHResult:
    """EH barcodes and features for perturbing residue ``i`` (0-based)."""
    if system is None:
        pts = model_or_points.positions if isinstance(model_or_points, ProteinModel) else model_or_points
        system = prepare_system(pts, cfg)
    try:
        return run_experiment(system, i, cfg)[0]
    except EvohomError as exc:
        raise ResidueError(i, exc) from exc


def _task(system, cfg, variants, i):
    try:
        return run_experiment(system, i, cfg, variants)
    except EvohomError as exc:
        raise ResidueError(i, exc) from None


def parallel_map(fn, items, workers: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally in worker processes; order always follows ``items``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def compute_eh(points, cfg: EHConfig = EHConfig(), nodes=None, workers: int = 1, variants=None, system=None):
    """Run the experiment for every requested node.

    Returns a list of :class:`EHResult` in node order, or, when ``variants`` is
    given, one such list per variant.
    """
    system = system or prepare_system(points, cfg)
    nodes = range(len(system.points)) if nodes is None else nodes
    per_node = parallel_map(partial(_task, system, cfg, variants), nodes, workers)
    if variants is None:
        return [r[0] for r in per_node]
    return [[r[v] for r in per_node] for v in range(len(variants))]


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson needs two equal-length sequences of at least 2 values")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(float(dx @ dx)), math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        raise UndefinedCorrelation("correlation is undefined for a constant sequence")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class RegressionResult:
    coefficients: np.ndarray
    fitted: np.ndarray
    pearson: float
    ridge: bool = False


def ols_fit(features, y) -> RegressionResult:
    """Least squares of ``y`` on the feature columns plus an intercept (last coefficient).

    Solves the normal equations by Cholesky; a rank-deficient design falls back
    to a ridge term of ``1e-8 * trace(X^T X)``.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    X = np.column_stack((X, np.ones(len(X))))
    if X.shape[0] < X.shape[1]:
        raise ValueError(f"underdetermined fit: {X.shape[0]} rows for {X.shape[1]} coefficients")
    G = X.T @ X
    rhs = X.T @ y
    ridge = np.linalg.matrix_rank(X) < X.shape[1]
    if ridge:
        G = G + 1e-8 * np.trace(G) * np.eye(len(G))
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        ridge = True
        G = G + 1e-8 * np.trace(G) * np.eye(len(G))
        L = np.linalg.cholesky(G)
    coef = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    fitted = X @ coef
    try:
        r = pearson(fitted, y)
    except UndefinedCorrelation:
        r = math.nan
    return RegressionResult(coef, fitted, r, bool(ridge))


def _safe_pearson(x, y):
    try:
        return pearson(x, y)
    except UndefinedCorrelation:
        return None


# ---------------------------------------------------------------------------
# B-factor experiment
# ---------------------------------------------------------------------------


@dataclass
class BFactorReport:
    protein: str
    residues: list
    features: np.ndarray
    bfactors: np.ndarray
    correlations: dict
    regression: RegressionResult
    n_models: int
    warnings: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "protein": self.protein,
            "n_residues": len(self.residues),
            "n_models": self.n_models,
            "correlations": self.correlations,
            "regression": {
                "features": list(REGRESSION_FEATURES),
                "coefficients": [float(c) for c in self.regression.coefficients],
                "pearson": None if math.isnan(self.regression.pearson) else self.regression.pearson,
                "ridge_fallback": self.regression.ridge,
            },
            "warnings": self.warnings,
        }


def _groups(model: ProteinModel, chain_split: int) -> list[ProteinModel]:
    if len(model) > chain_split and len(model.chains()) > 1:
        return [model.select_chain(c) for c in model.chains()]
    return [model]


def model_features(model: ProteinModel, cfg: EHConfig, workers: int = 1, chain_split: int = 2000, variants=None):
    """Feature matrix ``(residues, 9)`` for one model, or one per variant.

    Large multi-chain models are processed chain by chain and the rows
    concatenated in file order.
    """
    blocks = None
    for group in _groups(model, chain_split):
        if variants is None:
            per_variant = [compute_eh(group.positions, cfg, workers=workers)]
        else:
            per_variant = compute_eh(group.positions, cfg, workers=workers, variants=variants)
        mats = [np.array([r.feature_row() for r in results]) for results in per_variant]
        blocks = mats if blocks is None else [np.vstack((b, m)) for b, m in zip(blocks, mats)]
    return blocks[0] if variants is None else blocks


def _check_models(models) -> None:
    if not models:
        raise InputError("no models")
    keys = [r.key for r in models[0].residues]
    for m in models[1:]:
        if [r.key for r in m.residues] != keys:
            raise InputError(f"model {m.index} has a different residue list from model {models[0].index}")


def _evaluate(protein, model0, feats, n_models, warnings=()) -> BFactorReport:
    b = model0.b_factors
    if np.isnan(b).any():
        raise InputError(f"{protein}: B-factors missing for some residues")
    corr = {name: _safe_pearson(feats[:, k], b) for k, name in enumerate(FEATURE_NAMES)}
    cols = [FEATURE_NAMES.index(n) for n in REGRESSION_FEATURES]
    reg = ols_fit(feats[:, cols], b)
    return BFactorReport(protein, list(model0.residues), feats, b, corr, reg, n_models, list(warnings))


def bfactor_experiment(models, cfg: EHConfig = EHConfig(), protein: str = "protein", workers: int = 1, chain_split: int = 2000) -> BFactorReport:
    """Blind per-feature correlations with B-factors plus the six-feature regression.

    Features are averaged over models before evaluation; B-factors come from
    the first model.
    """
    _check_models(models)
    mats = [model_features(m, cfg, workers, chain_split) for m in models]
    return _evaluate(protein, models[0], np.mean(mats, axis=0), len(models))


@dataclass(frozen=True)
class SweepPoint:
    eps_p: float
    eps_sync: float
    eps_d: float
    regression_pearson: float
    correlations: dict


def sweep(models, cfg: EHConfig, eps_p_values, eps_sync_values, eps_d_values, protein="protein", workers: int = 1, chain_split: int = 2000):
    """Evaluate every (eps_p, eps_sync, eps_d) combination with one simulation per residue.

    Returns all points and the best one by regression Pearson correlation.
    """
    _check_models(models)
    grid = list(itertools.product(eps_p_values, eps_sync_values, eps_d_values))
    variants = [FiltrationParams(*g) for g in grid]
    per_model = [model_features(m, cfg, workers, chain_split, variants) for m in models]
    points = []
    for v, (ep, es, ed) in enumerate(grid):
        feats = np.mean([pm[v] for pm in per_model], axis=0)
        rep = _evaluate(protein, models[0], feats, len(models))
        points.append(SweepPoint(ep, es, ed, rep.regression.pearson, rep.correlations))
    scored = [p for p in points if not math.isnan(p.regression_pearson)]
    best = max(scored, key=lambda p: p.regression_pearson) if scored else None
    return points, best
