"""Byte-stable JSON and CSV artifacts.

Floats are written with Python's shortest round-trip ``repr``, so reading a
file back reproduces every double exactly. Outputs carry a provenance block
with the artifact version and the effective configuration.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

from . import __version__
from .errors import InputError
from .metrics import FEATURE_NAMES
from .persistence import Bar, Barcode

BUNDLE_FORMAT = "evohom.barcodes/1"
CSV_HEADER = ("protein", "chain", "residue", *FEATURE_NAMES, "bfactor")


def provenance(config: dict | None = None, **extra) -> dict:
    out = {"artifact": "evohom", "version": __version__}
    if config is not None:
        out["config"] = config
    out.update(extra)
    return out


def barcode_to_dict(bc: Barcode) -> dict:
    """JSON-ready barcode; an infinite cap is written as ``null``."""
    return {
        "dim": int(bc.dim),
        "cap": float(bc.cap) if math.isfinite(bc.cap) else None,
        "bars": [[float(b.birth), float(b.death)] for b in bc.bars],
        "essential": [bool(b.essential) for b in bc.bars],
    }


def barcode_from_dict(d: dict) -> Barcode:
    try:
        bars = d["bars"]
        essential = d.get("essential", [False] * len(bars))
        if len(essential) != len(bars):
            raise InputError("barcode 'essential' flags do not match its bars")
        out = tuple(Bar(float(b), float(e), bool(f)) for (b, e), f in zip(bars, essential))
        cap = d.get("cap")
        return Barcode(int(d["dim"]), out, math.inf if cap is None else float(cap))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed barcode record: {exc}") from None


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def bundle(result, prov: dict, label: str | None = None) -> dict:
    """JSON-ready record for one perturbation experiment (an ``EHResult``)."""
    return {
        "format": BUNDLE_FORMAT,
        "provenance": prov,
        "node": int(result.node),
        "label": label if label is not None else str(result.node),
        "t_sync": float(result.t_sync),
        "n_affected": len(result.affected),
        "affected": [int(a) for a in result.affected],
        "perturbed_forced": bool(result.perturbed_forced),
        "barcodes": [barcode_to_dict(b) for b in result.barcodes],
        "features": {k: float(result.features[k]) for k in FEATURE_NAMES},
        "warnings": list(result.warnings),
    }


def barcodes_bundle(bcs, prov: dict) -> dict:
    """A bundle holding barcodes only, e.g. from a Rips filtration."""
    return {"format": BUNDLE_FORMAT, "provenance": prov, "barcodes": [barcode_to_dict(b) for b in bcs]}


def read_bundle(path) -> dict[int, Barcode]:
    """Barcodes of a saved bundle keyed by dimension."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict) or data.get("format") != BUNDLE_FORMAT:
        raise InputError(f"{path}: not a barcode bundle")
    out = {}
    for rec in data.get("barcodes", []):
        bc = barcode_from_dict(rec)
        out[bc.dim] = bc
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(rows, prov: dict, header=CSV_HEADER) -> str:
    """CSV with the provenance as leading ``#`` comment lines."""
    lines = [f"# {line}" for line in json.dumps(prov, sort_keys=True).splitlines()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return body[0].split(","), [ln.split(",") for ln in body[1:]]


def write_files(files: dict) -> None:
    """Write ``{path: text}`` so that either every file appears or none does.

    Each file is staged next to its destination and moved into place only
    after all of them have been written.
    """
    staged = []
    try:
        for path, text in files.items():
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            staged.append((tmp, path))
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)
