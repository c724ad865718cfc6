"""Quick oracle checks run by ``evohom selftest``."""
from __future__ import annotations

import math
import sys

import numpy as np

from . import dynamics as dyn
from .filtration import build_flag_filtration
from .metrics import bottleneck, wasserstein
from .oracles import brute_wasserstein, naive_barcodes, random_flag_filtration
from .persistence import barcodes, rips_filtration

HEXAGON_NOTE = (
    "a death value of 16 (twice the side) is sometimes quoted for this example; "
    "the flag complex fills the hexagon once the skip-one chords of length 8*sqrt(3) enter, "
    "so H1 dies at 8*sqrt(3) and a short H2 class lives on [8*sqrt(3), 16)"
)


def hexagon(side: float = 8.0) -> np.ndarray:
    k = np.arange(6)
    return side * np.column_stack((np.cos(k * np.pi / 3), np.sin(k * np.pi / 3), np.zeros(6)))


def check_persistence(rng, cases: int) -> bool:
    for _ in range(cases):
        M = int(rng.integers(1, 8))
        fv, fe = random_flag_filtration(rng, M, far_fraction=float(rng.uniform(0, 0.5)))
        filt = build_flag_filtration(fv, fe, 1.0, 2)
        got = {b.dim: b.pairs() for b in barcodes(filt)}
        if got != naive_barcodes(fv, fe, 1.0, 2):
            return False
    return True


def _random_barcode(rng, n):
    b = rng.uniform(0, 1, n)
    return [(x, x + y) for x, y in zip(b, rng.uniform(0, 1, n))]


def check_matching(rng, cases: int) -> bool:
    for _ in range(cases):
        B1 = _random_barcode(rng, int(rng.integers(0, 5)))
        B2 = _random_barcode(rng, int(rng.integers(0, 5)))
        for p in (1, 2):
            if abs(wasserstein(B1, B2, p) - brute_wasserstein(B1, B2, p)) > 1e-9:
                return False
        if abs(bottleneck(B1, B2) - brute_wasserstein(B1, B2, math.inf)) > 1e-9:
            return False
    return True


def hexagon_h1():
    bcs = barcodes(rips_filtration(hexagon(8.0)))
    return bcs[1].pairs(), bcs[2].pairs()


def rk4_order() -> float:
    errs = []
    for h in (0.1, 0.05, 0.025):
        traj = dyn.integrate_rk4(lambda u: -u, np.array([1.0]), 0.0, 1.0, h)
        errs.append(abs(traj.states[-1, 0] - math.exp(-1.0)))
    return float(np.polyfit(np.log([0.1, 0.05, 0.025]), np.log(errs), 1)[0])


def run_selftest(seed: int = 0, cases: int = 50, stream=sys.stdout) -> bool:
    rng = np.random.default_rng(seed)
    results = []

    def report(name, ok, detail=""):
        results.append(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name}{': ' + detail if detail else ''}", file=stream)

    report("persistence vs dense reduction", check_persistence(rng, cases), f"{cases} filtrations")
    report("matching vs exhaustive enumeration", check_matching(rng, cases), f"{cases} pairs")
    h1, h2 = hexagon_h1()
    ok = len(h1) == 1 and abs(h1[0][0] - 8) <= 1e-9 and abs(h1[0][1] - 8 * math.sqrt(3)) <= 1e-9
    report("hexagon side 8 Rips H1", ok, f"H1 {h1}, H2 {h2}")
    print(f"note: {HEXAGON_NOTE}", file=stream)
    slope = rk4_order()
    report("RK4 order on du/dt = -u", slope >= 3.9, f"slope {slope:.4f}")
    return all(results)
