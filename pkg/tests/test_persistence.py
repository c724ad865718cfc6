import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evohom.errors import BudgetExceeded
from evohom.filtration import build_flag_filtration
from evohom.oracles import naive_barcodes, random_flag_filtration
from evohom.persistence import Bar, barcodes, persistence_h0, persistence_high, rips_filtration, simplex_budget


def as_dict(bcs):
    return {b.dim: b.pairs() for b in bcs}


@given(st.integers(0, 2**32 - 1), st.integers(1, 7), st.floats(0, 0.6))
def test_matches_dense_reduction(seed, M, far):
    rng = np.random.default_rng(seed)
    fv, fe = random_flag_filtration(rng, M, far)
    filt = build_flag_filtration(fv, fe, 1.0, 2)
    assert as_dict(barcodes(filt)) == naive_barcodes(fv, fe, 1.0, 2)


@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_relabeling_invariant(seed, M):
    rng = np.random.default_rng(seed)
    fv, fe = random_flag_filtration(rng, M, 0.3)
    filt = build_flag_filtration(fv, fe, 1.0, 2)
    perm = rng.permutation(M)
    assert as_dict(barcodes(filt.relabeled(perm))) == as_dict(barcodes(filt))


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.floats(-5, 5))
def test_shift_moves_every_bar(seed, M, c):
    rng = np.random.default_rng(seed)
    fv, fe = random_flag_filtration(rng, M, 0.3)
    base = barcodes(build_flag_filtration(fv, fe, 1.0, 2))
    shifted = barcodes(build_flag_filtration(fv, fe, 1.0, 2).shifted(c))
    for a, b in zip(base, shifted):
        np.testing.assert_allclose(b.as_array(), a.as_array() + c, atol=1e-12)


def test_hexagon_rips(hexagon_points):
    bcs = barcodes(rips_filtration(hexagon_points))
    assert len(bcs[1]) == 1
    (b, d), = bcs[1].pairs()
    assert b == pytest.approx(8.0, abs=1e-9)
    assert d == pytest.approx(8 * math.sqrt(3), abs=1e-9)
    (b2, d2), = bcs[2].pairs()
    assert b2 == pytest.approx(8 * math.sqrt(3), abs=1e-9) and d2 == pytest.approx(16.0, abs=1e-9)
    assert bcs[0].pairs()[-1] == (0.0, pytest.approx(16.0))
    assert len(bcs[0]) == 6


def test_unit_square():
    bcs = barcodes(rips_filtration([[0, 0], [1, 0], [1, 1], [0, 1]]))
    assert bcs[1].pairs() == [(1.0, pytest.approx(math.sqrt(2)))]
    assert bcs[2].pairs() == []


def test_elder_rule():
    fv = [0.0, 0.5]
    fe = np.array([[0.0, 0.7], [0.7, 0.5]])
    bcs = persistence_h0(build_flag_filtration(fv, fe, 1.0))
    assert bcs.pairs() == [(0.0, 1.0), (0.5, 0.7)]
    assert [b.essential for b in bcs] == [True, False]


def test_empty_and_single_vertex():
    empty = build_flag_filtration([], np.zeros((0, 0)), 1.0)
    assert [len(b) for b in barcodes(empty)] == [0, 0, 0]
    one = build_flag_filtration([0.25], [[0.25]], 1.0)
    assert barcodes(one)[0].pairs() == [(0.25, 1.0)]
    zero = build_flag_filtration([0.0], [[0.0]], 0.0)
    assert barcodes(zero)[0].pairs() == []


def test_bars_validate():
    with pytest.raises(ValueError):
        Bar(1.0, 0.5)
    assert Bar(0, 1) == Bar(0, 1, essential=True)


def test_max_dim_limits():
    filt = rips_filtration(np.eye(3), max_dim=1)
    assert len(barcodes(filt)) == 2
    with pytest.raises(ValueError):
        persistence_high(filt, max_dim=3)
    assert persistence_high(filt, max_dim=0) == []


def test_budget(monkeypatch, hexagon_points):
    filt = rips_filtration(hexagon_points, max_value=17.0)
    with pytest.raises(BudgetExceeded) as info:
        barcodes(filt, budget=10)
    assert info.value.required == math.comb(6, 3) + math.comb(6, 4)
    assert info.value.exit_code == 4
    monkeypatch.setenv("EVOHOM_BUDGET", "5")
    assert simplex_budget() == 5
    with pytest.raises(BudgetExceeded):
        barcodes(filt)


def test_cap_truncation_is_exact():
    rng = np.random.default_rng(7)
    fv, fe = random_flag_filtration(rng, 7, 0.9)
    filt = build_flag_filtration(fv, fe, 1.0, 2)
    assert as_dict(barcodes(filt)) == naive_barcodes(fv, fe, 1.0, 2)
