"""Plain-text run configuration.

Lines are ``key = value``. Keys are dotted (``dynamics.gamma``) or bare inside
a ``[section]`` header. ``#`` starts a comment. Unknown keys and out-of-range
values are rejected with the offending key and line number.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from . import dynamics as dyn
from .errors import ConfigError
from .protein import EHConfig


def _float(text):
    return float(text)


def _int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError("expected an integer")
    return int(value)


def _opt_float(text):
    return None if text.strip().lower() in ("auto", "none") else float(text)


def _opt_int(text):
    return None if text.strip().lower() in ("auto", "none") else _int(text)


def _matrix3(text):
    rows = [r.split() for r in text.replace(",", " ").split(";")]
    vals = tuple(tuple(float(x) for x in r) for r in rows)
    if len(vals) != 3 or any(len(r) != 3 for r in vals):
        raise ValueError("expected 3 rows of 3 numbers separated by ';'")
    return vals


def _paths(text):
    return tuple(p for p in (s.strip() for s in text.split(",")) if p)


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _finite(v):
    return math.isfinite(v)


@dataclass(frozen=True)
class _Key:
    field: str
    parse: object
    check: object = None
    rule: str = ""


KEYS = {
    "dynamics.delta": _Key("delta", _float, _positive, "> 0"),
    "dynamics.gamma": _Key("gamma", _float, _finite, "finite"),
    "dynamics.beta": _Key("beta", _float, _positive, "> 0"),
    "dynamics.epsilon": _Key("epsilon", _float, _nonneg, ">= 0"),
    "dynamics.mu": _Key("mu", _float, _positive, "> 0"),
    "dynamics.kappa": _Key("kappa", _float, _positive, "> 0"),
    "dynamics.linking": _Key("linking", _matrix3),
    "dynamics.multiplier": _Key("multiplier", _float, _finite, "finite"),
    "simulation.h": _Key("h", _float, _positive, "> 0"),
    "simulation.t_end": _Key("t_end", _float, _positive, "> 0"),
    "simulation.max_doublings": _Key("max_doublings", _int, _nonneg, ">= 0"),
    "simulation.burn_in": _Key("burn_in", _float, _nonneg, ">= 0"),
    "simulation.window": _Key("window", _float, _positive, "> 0"),
    "simulation.fp_tol": _Key("fp_tol", _float, _positive, "> 0"),
    "filtration.eps_p": _Key("eps_p", _opt_float, lambda v: v is None or v >= 0, ">= 0 or auto"),
    "filtration.eps_sync": _Key("eps_sync", _float, _nonneg, ">= 0"),
    "filtration.eps_d": _Key("eps_d", _float, _nonneg, ">= 0"),
    "persistence.max_dim": _Key("max_dim", _int, lambda v: 0 <= v <= 2, "in 0..2"),
    "persistence.budget": _Key("budget", _opt_int, lambda v: v is None or v > 0, "> 0 or auto"),
    "protein.chain_split": _Key("chain_split", _int, _positive, "> 0"),
    "run.inputs": _Key("inputs", _paths),
    "run.out": _Key("out", str),
    "run.workers": _Key("workers", _opt_int, lambda v: v is None or v >= 1, ">= 1 or auto"),
    "run.seed": _Key("seed", _int, _nonneg, ">= 0"),
}


_NOT_IN_PROVENANCE = ("run.inputs", "run.out", "run.workers")


@dataclass(frozen=True)
class RunConfig:
    delta: float = 1.0
    gamma: float = 12.0
    beta: float = 8.0 / 3.0
    epsilon: float = 0.12
    mu: float = 8.0
    kappa: float = 2.0
    linking: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    multiplier: float = 2.0
    h: float = 0.01
    t_end: float = 10.0
    max_doublings: int = 8
    burn_in: float = 50.0
    window: float = 10.0
    fp_tol: float = 1e-6
    eps_p: float | None = None
    eps_sync: float = 0.1
    eps_d: float = 8.0
    max_dim: int = 2
    budget: int | None = None
    chain_split: int = 2000
    inputs: tuple = ()
    out: str = "."
    workers: int | None = None
    seed: int = 0

    def eh_config(self) -> EHConfig:
        return EHConfig(
            lorenz=dyn.LorenzParams(self.delta, self.gamma, self.beta),
            epsilon=self.epsilon,
            linking=self.linking,
            mu=self.mu,
            kappa=self.kappa,
            h=self.h,
            multiplier=self.multiplier,
            eps_p=self.eps_p,
            eps_sync=self.eps_sync,
            eps_d=self.eps_d,
            max_dim=self.max_dim,
            t_end=self.t_end,
            max_doublings=self.max_doublings,
            burn_in=self.burn_in,
            window=self.window,
            fp_tol=self.fp_tol,
            budget=self.budget,
        )

    def effective_workers(self) -> int:
        return self.workers if self.workers is not None else (os.cpu_count() or 1)

    def provenance(self) -> dict:
        """Every setting that can change results, under its dotted key; ``None`` means ``auto``.

        Paths, output directory and worker count are left out so that the same
        computation yields the same bytes wherever and however it runs.
        """
        values = asdict(self)
        out = {}
        for key, spec in KEYS.items():
            if key in _NOT_IN_PROVENANCE:
                continue
            v = values[spec.field]
            out[key] = [list(r) for r in v] if spec.field == "linking" else list(v) if isinstance(v, tuple) else v
        return out


_FIELD_NAMES = {f.name for f in fields(RunConfig)}
assert {k.field for k in KEYS.values()} == _FIELD_NAMES


def parse_config(text: str, base_dir: str | os.PathLike | None = None, check_inputs: bool = True) -> RunConfig:
    """Parse configuration text into a fully defaulted :class:`RunConfig`.

    Relative ``run.inputs`` paths resolve against ``base_dir``; with
    ``check_inputs`` each must exist.
    """
    updates = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in {k.split(".")[0] for k in KEYS}:
                raise ConfigError(f"unknown section [{section}]", section, lineno)
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", None, lineno)
        name, value = (s.strip() for s in line.split("=", 1))
        key = name if "." in name or section is None else f"{section}.{name}"
        spec = KEYS.get(key)
        if spec is None:
            raise ConfigError("unknown key", key, lineno)
        try:
            parsed = spec.parse(value)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {value!r}: {exc}", key, lineno) from None
        if spec.check is not None and not spec.check(parsed):
            raise ConfigError(f"value {value!r} out of range, must be {spec.rule}", key, lineno)
        updates[spec.field] = (parsed, key, lineno)
    if "inputs" in updates:
        paths, key, lineno = updates["inputs"]
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        resolved = tuple(str(p if Path(p).is_absolute() else base / p) for p in paths)
        if check_inputs:
            for p in resolved:
                if not Path(p).exists():
                    raise ConfigError(f"input path {p} does not exist", key, lineno)
        updates["inputs"] = (resolved, key, lineno)
    return replace(RunConfig(), **{f: v for f, (v, _, _) in updates.items()})


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def with_overrides(cfg: RunConfig, **values) -> RunConfig:
    """Apply command-line overrides, validating them like config keys."""
    by_field = {spec.field: key for key, spec in KEYS.items()}
    for name, v in values.items():
        spec = KEYS[by_field[name]]
        if spec.check is not None and not spec.check(v):
            raise ConfigError(f"value {v!r} out of range, must be {spec.rule}", by_field[name])
    return replace(cfg, **values)
