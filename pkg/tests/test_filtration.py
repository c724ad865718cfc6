from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evohom.errors import FiltrationError, SimulationTooShort
from evohom.filtration import (
    FiltrationParams,
    affected_set,
    build_flag_filtration,
    edge_values,
    eh_filtration,
    global_sync_time,
    pair_crossings,
    tail_integrals,
    vertex_values,
)


def grid(t_end, h=0.01):
    return np.round(np.arange(int(round(t_end / h)) + 1) * h, 12)


def synthetic(rng, M, t_end=10.0, h=0.05):
    """Decaying oscillating deviation curves; node 0 carries the perturbation at t = 0."""
    t = grid(t_end, h)
    amp = rng.uniform(0, 2, M)
    rate = rng.uniform(1, 3, M)
    freq = rng.uniform(0, 5, M)
    phase = rng.uniform(0, np.pi, M)
    v = amp * np.exp(-rate * t[:, None]) * np.abs(np.cos(freq * t[:, None] + phase))
    v[0, 0] = 2.0
    return SimpleNamespace(times=t, values=v)


def test_params_validated():
    with pytest.raises(ValueError, match="eps_p"):
        FiltrationParams(-1, 0.1, 8)
    with pytest.raises(ValueError):
        FiltrationParams(0.1, float("nan"), 8)


def test_tail_integral_identical_is_zero():
    t = grid(1)
    assert (tail_integrals(np.zeros_like(t), t) == 0).all()


def test_tail_integral_constant():
    t = grid(2)
    out = tail_integrals(np.full_like(t, 0.7), t)
    np.testing.assert_allclose(out, 0.7 * (2 - t), atol=1e-12)


def test_tail_integral_ramp():
    t = grid(1)
    assert tail_integrals(t, t)[0] == pytest.approx(0.5, abs=1e-4)


def test_tail_integral_grid_mismatch():
    with pytest.raises(ValueError):
        tail_integrals(np.zeros(3), np.arange(4.0))


@given(st.lists(st.floats(0, 100), min_size=2, max_size=60))
def test_tail_integrals_non_increasing(vals):
    t = np.arange(len(vals)) * 0.1
    out = tail_integrals(np.array(vals), t)
    assert (np.diff(out) <= 0).all()
    assert out[-1] == 0


def test_affected_set_examples():
    v = np.array([[0.0, 0.0, 0.0], [0.5, 1.5, 3.0], [0.1, 0.2, 0.3]])
    assert list(affected_set(v, 0.0)) == [0, 1, 2]
    assert list(affected_set(v, 10.0)) == []
    assert list(affected_set(v, 1.0)) == [1, 2]


def test_affected_set_initial_sample_counts_for_perturbed_node_only():
    v = np.array([[5.0, 5.0], [0.0, 0.0]])
    assert list(affected_set(v, 1.0)) == []
    assert list(affected_set(v, 1.0, perturbed=1)) == [1]


def test_sync_time_examples():
    t = grid(3)
    same = np.tile(np.exp(-t)[:, None], (1, 3))
    assert global_sync_time(same, t, 0.1) == 0.0
    assert global_sync_time(same[:, :1], t, 0.1) == 0.0
    step = np.column_stack((np.where(t < 1, 1.0, 0.0), np.zeros_like(t)))
    assert global_sync_time(step, t, 1.0) == pytest.approx(0.5)


def test_sync_time_too_short():
    t = grid(1)
    v = np.column_stack((np.ones_like(t), np.zeros_like(t)))
    with pytest.raises(SimulationTooShort):
        global_sync_time(v, t, 0.01)


def test_vertex_values():
    t = grid(1)
    ramp = np.column_stack((t / 0.37, np.zeros_like(t), np.full_like(t, 5.0)))
    fv = vertex_values(ramp, t, 1.0, 0.9)
    assert fv[0] == pytest.approx(0.37)
    assert fv[1] == 0.9
    assert fv[2] == 0.0


def test_edge_values_examples():
    t = grid(2)
    idx = np.array([[0, 80], [80, 0]])
    d = np.array([[0.0, 5.0], [5.0, 0.0]])
    e = edge_values(idx, t, d, 8.0, np.array([0.2, 0.5]), 1.5)
    assert e[0, 1] == pytest.approx(0.8)
    e = edge_values(idx, t, d, 8.0, np.array([0.9, 0.2]), 1.5)
    assert e[0, 1] == pytest.approx(0.9)
    e = edge_values(idx, t, d, 4.0, np.array([0.9, 0.2]), 1.5)
    assert e[0, 1] == 1.5
    assert e[0, 0] == 0.9


def test_edge_distance_slack_absorbs_rounding():
    t = grid(1)
    idx = np.array([[0, 10], [10, 0]])
    d = np.array([[0.0, 8.0 + 4e-15], [8.0 + 4e-15, 0.0]])
    e = edge_values(idx, t, d, 8.0, np.zeros(2), 1.0)
    assert e[0, 1] == pytest.approx(0.1)


def test_pair_crossings_symmetric():
    rng = np.random.default_rng(0)
    t = grid(1)
    v = rng.uniform(0, 1, size=(len(t), 4))
    (idx,) = pair_crossings(v, t, (0.2,))
    np.testing.assert_array_equal(idx, idx.T)
    assert (np.diag(idx) == 0).all()


def test_build_flag_filtration_examples():
    f = build_flag_filtration([0, 0], [[0, 1], [1, 0]], 1.0)
    assert f.edge_values[0, 1] == 1.0
    with pytest.raises(FiltrationError):
        build_flag_filtration([0, 0], [[0, 1], [0.5, 0]], 1.0)
    with pytest.raises(FiltrationError):
        build_flag_filtration([0, 0.6], [[0, 0.5], [0.5, 0.6]], 1.0)
    with pytest.raises(FiltrationError):
        build_flag_filtration([0, 0], [[0, 2], [2, 0]], 1.0)


def _check_filtration(filt, info):
    fv, fe = filt.vertex_values, filt.edge_values
    assert (fe >= np.maximum(fv[:, None], fv[None, :])).all()
    assert (fe <= info.t_sync).all() and (fv >= 0).all()
    np.testing.assert_array_equal(fe, fe.T)


@given(st.integers(0, 2**32 - 1), st.integers(1, 7))
def test_eh_filtration_monotone(seed, M):
    rng = np.random.default_rng(seed)
    sc = synthetic(rng, M)
    dist = rng.uniform(0, 16, size=(M, M))
    dist = (dist + dist.T) / 2
    np.fill_diagonal(dist, 0)
    params = FiltrationParams(rng.uniform(0, 1), rng.uniform(0.05, 1), 8.0)
    filt, info = eh_filtration(sc, dist, params, perturbed=0)
    _check_filtration(filt, info)
    assert 0 in info.affected


@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_eh_filtration_permutation_equivariant(seed, M):
    rng = np.random.default_rng(seed)
    sc = synthetic(rng, M)
    dist = rng.uniform(0, 16, size=(M, M))
    dist = (dist + dist.T) / 2
    np.fill_diagonal(dist, 0)
    params = FiltrationParams(rng.uniform(0, 1), rng.uniform(0.05, 1), 8.0)
    perm = rng.permutation(M)
    inv = np.argsort(perm)
    filt, info = eh_filtration(sc, dist, params, perturbed=0)
    psc = SimpleNamespace(times=sc.times, values=sc.values[:, perm])
    pfilt, pinfo = eh_filtration(psc, dist[np.ix_(perm, perm)], params, perturbed=int(inv[0]))
    assert pinfo.t_sync == info.t_sync
    assert sorted(perm[pinfo.affected]) == sorted(info.affected)
    pos = {n: a for a, n in enumerate(filt.nodes)}
    ppos = {n: a for a, n in enumerate(pfilt.nodes)}
    for x in filt.nodes:
        for y in filt.nodes:
            assert filt.edge_values[pos[x], pos[y]] == pfilt.edge_values[ppos[inv[x]], ppos[inv[y]]]


def test_forced_perturbed_node_flagged():
    t = grid(2)
    v = np.zeros((len(t), 2))
    sc = SimpleNamespace(times=t, values=v)
    filt, info = eh_filtration(sc, np.zeros((2, 2)), FiltrationParams(1.0, 0.1, 8.0), perturbed=1)
    assert info.perturbed_forced and list(info.affected) == [1]
    filt, info = eh_filtration(sc, np.zeros((2, 2)), FiltrationParams(1.0, 0.1, 8.0), perturbed=1, force_perturbed=False)
    assert len(filt) == 0


def test_relabel_and_shift():
    f = build_flag_filtration([0.0, 0.1, 0.2], [[0, 0.5, 0.7], [0.5, 0.1, 0.9], [0.7, 0.9, 0.2]], 1.0)
    g = f.relabeled([2, 0, 1])
    assert g.nodes == (2, 0, 1)
    assert g.edge_values[0, 1] == 0.7
    s = f.shifted(1.0)
    assert s.cap == 2.0 and s.vertex_values[2] == 1.2
