"""Command-line front end: ``evohom eh | bfactor | distance | simulate | selftest``.

Errors are printed to stderr as one JSON object and mapped to exit codes
0 success, 1 usage/config, 2 input, 3 numerical, 4 budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import serialize as ser
from .config import RunConfig, load_config, with_overrides
from .errors import ConfigError, EvohomError, InputError
from .metrics import FEATURE_NAMES, bottleneck, wasserstein
from .protein import (
    ProteinModel,
    Residue,
    bfactor_experiment,
    compute_eh,
    prepare_system,
    read_structure,
    simulate_perturbation,
    sweep,
)

log = logging.getLogger("evohom")

PDB_SUFFIXES = (".pdb", ".ent", ".pdb.gz", ".ent.gz")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _p_value(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity", "bottleneck"):
        return math.inf
    try:
        p = float(text)
    except ValueError:
        raise ConfigError(f"--p must be a number >= 1 or 'inf', got {text!r}") from None
    if not p >= 1:
        raise ConfigError(f"--p must be >= 1, got {text!r}")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evohom", description="Evolutionary homology barcodes and features.")
    parser.add_argument("--version", action="version", version=f"evohom {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p, inputs: bool = True):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help="output directory (overrides run.out)")
        p.add_argument("--workers", type=int, help="worker processes (default: available cores)")
        if inputs:
            p.add_argument("inputs", nargs="*", help="input files (default: run.inputs)")

    p = sub.add_parser("eh", help="barcodes and features for perturbing nodes of a point set or PDB")
    common(p)
    p.add_argument("--node", default="all", help="0-based node index or 'all'")
    p.add_argument("--max-dim", type=int, help="highest homology dimension (0..2)")

    p = sub.add_parser("bfactor", help="B-factor correlation report for PDB structures")
    common(p)
    p.add_argument("--max-dim", type=int, help="highest homology dimension (0..2)")
    p.add_argument("--sweep", action="store_true", help="grid search over the filtration thresholds")
    p.add_argument("--eps-p-grid", default="0.005,0.02,0.1", help="eps_p values for --sweep")
    p.add_argument("--eps-sync-grid", default="0.1,1", help="eps_sync values for --sweep")
    p.add_argument("--eps-d-grid", default="8,12", help="eps_d values for --sweep")

    p = sub.add_parser("distance", help="distance between two saved barcode bundles")
    p.add_argument("bundle_a")
    p.add_argument("bundle_b")
    p.add_argument("--p", default="inf", help="1, 2, ... or 'inf' for bottleneck (default inf)")
    p.add_argument("--dim", type=int, help="homology dimension (default: every dimension)")

    p = sub.add_parser("simulate", help="per-node deviation curves after one perturbation, as CSV")
    common(p)
    p.add_argument("--node", type=int, default=0, help="0-based node to perturb")
    p.add_argument("--t-end", type=float, help="simulation horizon (default simulation.t_end)")

    p = sub.add_parser("selftest", help="run the oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=50)
    return parser


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------


def _is_pdb(path: Path) -> bool:
    name = path.name.lower()
    return any(name.endswith(s) for s in PDB_SUFFIXES)


def read_points(path) -> ProteinModel:
    """Whitespace- or comma-separated coordinates, one point per row, as a chainless model."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        try:
            rows.append([float(x) for x in line.split()])
        except ValueError:
            raise InputError(f"{path}: line {lineno}: malformed coordinates") from None
    if not rows:
        raise InputError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise InputError(f"{path}: rows have different numbers of coordinates")
    pts = np.array(rows, dtype=float)
    if not np.isfinite(pts).all():
        raise InputError(f"{path}: non-finite coordinates")
    residues = tuple(Residue("", k, "", "", tuple(p)) for k, p in enumerate(pts.tolist()))
    return ProteinModel(residues)


def read_models(path) -> list[ProteinModel]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"input {path} does not exist")
    return read_structure(path) if _is_pdb(path) else [read_points(path)]


def _stem(path) -> str:
    name = Path(path).name
    for s in PDB_SUFFIXES + (".txt", ".csv", ".xyz"):
        if name.lower().endswith(s):
            return name[: -len(s)]
    return name


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    over = {}
    if getattr(args, "out", None):
        over["out"] = args.out
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    if getattr(args, "max_dim", None) is not None:
        over["max_dim"] = args.max_dim
    if getattr(args, "inputs", None):
        over["inputs"] = tuple(args.inputs)
    return with_overrides(cfg, **over) if over else cfg


def _inputs(cfg: RunConfig) -> list[Path]:
    if not cfg.inputs:
        raise ConfigError("no input files given", "run.inputs")
    paths = [Path(p) for p in cfg.inputs]
    for p in paths:
        if not p.exists():
            raise InputError(f"input {p} does not exist")
    return paths


def _prov(cfg: RunConfig, **extra) -> dict:
    return ser.provenance(cfg.provenance(), **extra)


def _residue_row(protein: str, res: Residue) -> list:
    return [protein, res.chain, res.label]


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def cmd_eh(args) -> int:
    cfg = _load(args)
    paths = _inputs(cfg)
    out = Path(cfg.out)
    files = {}
    for path in paths:
        model = read_models(path)[0]
        stem = _stem(path)
        if args.node == "all":
            nodes = list(range(len(model)))
        else:
            try:
                node = int(args.node)
            except ValueError:
                raise ConfigError(f"--node must be an integer or 'all', got {args.node!r}") from None
            if not 0 <= node < len(model):
                raise InputError(f"--node {node} out of range for {len(model)} nodes")
            nodes = [node]
        prov = _prov(cfg, input=path.name)
        results = compute_eh(model.positions, cfg.eh_config(), nodes=nodes, workers=cfg.effective_workers())
        rows = []
        for r in results:
            res = model.residues[r.node]
            label = res.label if res.chain == "" else f"{res.chain}:{res.label}"
            files[out / f"{stem}_node{r.node}.json"] = ser.dumps(ser.bundle(r, prov, label))
            b = "" if res.b_factor is None else float(res.b_factor)
            rows.append(_residue_row(stem, res) + [float(r.features[k]) for k in FEATURE_NAMES] + [b])
        files[out / f"{stem}_features.csv"] = ser.csv_text(rows, prov)
    ser.write_files(files)
    for p in files:
        print(p)
    return 0


def _protein_files(out: Path, stem: str, report, prov: dict) -> dict:
    feats, b = report.features, report.bfactors
    rows = [
        _residue_row(stem, res) + [float(x) for x in feats[k]] + [float(b[k])]
        for k, res in enumerate(report.residues)
    ]
    plot_header = ("index", "chain", "residue", "bfactor", "fitted", *FEATURE_NAMES)
    plot_rows = [
        [k, res.chain, res.label, float(b[k]), float(report.regression.fitted[k])] + [float(x) for x in feats[k]]
        for k, res in enumerate(report.residues)
    ]
    summary = dict(report.summary(), provenance=prov)
    return {
        out / f"{stem}_report.json": ser.dumps(summary),
        out / f"{stem}_features.csv": ser.csv_text(rows, prov),
        out / f"{stem}_plot.csv": ser.csv_text(plot_rows, prov, plot_header),
    }


def aggregate(summaries: list[dict]) -> dict:
    """Unweighted mean correlation per method over proteins where it is defined."""
    methods = list(FEATURE_NAMES) + ["EH"]
    out = {}
    for m in methods:
        vals = [
            s["regression"]["pearson"] if m == "EH" else s["correlations"][m]
            for s in summaries
        ]
        vals = [v for v in vals if v is not None]
        out[m] = {"mean_pearson": float(np.mean(vals)) if vals else None, "n_proteins": len(vals)}
    return out


def _aggregate_csv(agg: dict, prov: dict) -> str:
    rows = [[m, "" if v["mean_pearson"] is None else v["mean_pearson"], v["n_proteins"]] for m, v in agg.items()]
    return ser.csv_text(rows, prov, ("method", "mean_pearson", "n_proteins"))


def cmd_bfactor(args) -> int:
    cfg = _load(args)
    paths = _inputs(cfg)
    out = Path(cfg.out)
    eh_cfg = cfg.eh_config()
    workers = cfg.effective_workers()
    prov = _prov(cfg)
    summaries, failures = [], []
    for path in paths:
        stem = _stem(path)
        started = time.perf_counter()
        try:
            models = read_models(path)
            if args.sweep:
                points, best = sweep(
                    models,
                    eh_cfg,
                    _floats(args.eps_p_grid),
                    _floats(args.eps_sync_grid),
                    _floats(args.eps_d_grid),
                    protein=stem,
                    workers=workers,
                    chain_split=cfg.chain_split,
                )
                rows = [[p.eps_p, p.eps_sync, p.eps_d, p.regression_pearson] + [
                    "" if p.correlations[k] is None else p.correlations[k] for k in FEATURE_NAMES
                ] for p in points]
                header = ("eps_p", "eps_sync", "eps_d", "EH", *FEATURE_NAMES)
                ser.write_files({out / f"{stem}_sweep.csv": ser.csv_text(rows, prov, header)})
                if best is None:
                    raise InputError(f"{stem}: no sweep point gave a defined correlation")
                eh_cfg_p = replace(eh_cfg, eps_p=best.eps_p, eps_sync=best.eps_sync, eps_d=best.eps_d)
                log.info("%s: best sweep point eps_p=%g eps_sync=%g eps_d=%g R_P=%.4f",
                         stem, best.eps_p, best.eps_sync, best.eps_d, best.regression_pearson)
            else:
                eh_cfg_p = eh_cfg
            report = bfactor_experiment(models, eh_cfg_p, stem, workers, cfg.chain_split)
        except EvohomError as exc:
            failures.append({"input": str(path), **exc.to_dict()})
            log.error("%s: %s", path, exc)
            continue
        p_prov = dict(prov, input=path.name)
        if args.sweep:
            p_prov["selected"] = {"eps_p": eh_cfg_p.eps_p, "eps_sync": eh_cfg_p.eps_sync, "eps_d": eh_cfg_p.eps_d}
        files = _protein_files(out, stem, report, p_prov)
        ser.write_files(files)
        summaries.append(report.summary())
        log.info("%s: %d residues in %.1f s", stem, len(report.residues), time.perf_counter() - started)
    agg = aggregate(summaries)
    ser.write_files({
        out / "aggregate.json": ser.dumps({"provenance": prov, "proteins": [s["protein"] for s in summaries], "methods": agg}),
        out / "aggregate.csv": _aggregate_csv(agg, prov),
        out / "failures.json": ser.dumps({"provenance": prov, "failures": failures}),
    })
    for m in FEATURE_NAMES + ("EH",):
        v = agg[m]["mean_pearson"]
        print(f"{m:10s} {'n/a' if v is None else format(v, '.3f')}")
    if failures:
        print(json.dumps({"partial_failure": len(failures), "succeeded": len(summaries)}), file=sys.stderr)
        return max(f["exit_code"] for f in failures)
    return 0


def cmd_distance(args) -> int:
    p = _p_value(args.p)
    a = ser.read_bundle(args.bundle_a)
    b = ser.read_bundle(args.bundle_b)
    if args.dim is not None:
        if args.dim not in a or args.dim not in b:
            raise InputError(f"dimension {args.dim} missing from a bundle")
        dims = [args.dim]
    else:
        if set(a) != set(b):
            raise InputError(f"bundles cover different dimensions: {sorted(a)} vs {sorted(b)}")
        dims = sorted(a)
    for k in dims:
        d = bottleneck(a[k], b[k]) if math.isinf(p) else wasserstein(a[k], b[k], p)
        print(format(d, ".12g") if args.dim is not None else f"{k} {format(d, '.12g')}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    paths = _inputs(cfg)
    eh_cfg = cfg.eh_config()
    out = Path(cfg.out)
    files = {}
    for path in paths:
        model = read_models(path)[0]
        if not 0 <= args.node < len(model):
            raise InputError(f"--node {args.node} out of range for {len(model)} nodes")
        system = prepare_system(model.positions, eh_cfg)
        traj = simulate_perturbation(system, args.node, eh_cfg, args.t_end)
        sc = dyn.transform_trajectories(traj, system.orbit)
        header = ("time", *[f"n{k}" for k in range(len(model))])
        rows = [[float(t)] + [float(x) for x in v] for t, v in zip(sc.times, sc.values)]
        prov = _prov(cfg, input=path.name, node=args.node)
        files[out / f"{_stem(path)}_node{args.node}_deviation.csv"] = ser.csv_text(rows, prov, header)
    ser.write_files(files)
    for p in files:
        print(p)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok = run_selftest(seed=args.seed, cases=args.cases, stream=sys.stdout)
    return 0 if ok else 3


VERBS = {
    "eh": cmd_eh,
    "bfactor": cmd_bfactor,
    "distance": cmd_distance,
    "simulate": cmd_simulate,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return VERBS[args.verb](args)
    except EvohomError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
