import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import brownian, flat_start, jump_diffusion, two_dim
from pathdep.functionals import poly
from pathdep.paths import CadlagPath, PointedPath
from pathdep.simulator import (
    Ensemble,
    SimulationError,
    TimeGrid,
    empirical_characteristics,
    resimulate_from,
    resimulate_nodes,
    resolve_threads,
    simulate,
)


def test_grid_validation():
    g = TimeGrid(0.5, 1.0, 4)
    np.testing.assert_allclose(g.nodes, [0.5, 0.625, 0.75, 0.875, 1.0])
    assert g.index_of(0.75) == 2
    with pytest.raises(SimulationError):
        TimeGrid(1.0, 0.5, 4)


def test_brownian_moments():
    ens = simulate(brownian(sigma=0.8, beta=0.3), flat_start(1.0), TimeGrid(0.0, 1.0, 50), 40000, 3)
    xt = ens.X[:, -1, 0]
    n = xt.size
    assert abs(xt.mean() - 1.3) < 4 * 0.8 / np.sqrt(n)
    assert abs(xt.var() - 0.64) < 4 * 0.64 * np.sqrt(2 / n)


def test_characteristics_match_model():
    spec = two_dim()
    ens = simulate(spec, flat_start(0.0, d=2), TimeGrid(0.0, 1.0, 40), 20000, 9)
    rep = empirical_characteristics(ens, spec)
    assert rep.max_abs_z() < 4.5
    assert rep.atom_chi2_pvalue > 1e-3
    assert np.all(np.abs(rep.qv_rel_error) < 0.05)


def test_thread_count_does_not_change_results():
    spec = two_dim()
    grid = TimeGrid(0.0, 1.0, 20)
    ref = simulate(spec, flat_start(0.0, d=2), grid, 9000, 5, threads=1).to_bytes()
    for threads in (4, 8):
        assert simulate(spec, flat_start(0.0, d=2), grid, 9000, 5, threads=threads).to_bytes() == ref


@given(st.integers(1, 50), st.integers(0, 2**32))
def test_paths_depend_only_on_id(n, seed):
    spec = jump_diffusion()
    grid = TimeGrid(0.0, 1.0, 5)
    a = simulate(spec, flat_start(), grid, n + 3, seed)
    b = simulate(spec, flat_start(), grid, n, seed)
    np.testing.assert_array_equal(a.X[:n], b.X)


def test_prefix_is_pinned():
    eta = CadlagPath([0.0, 0.2], [[1.0], [2.0]], 1.0)
    start = PointedPath(0.5, eta)
    ens = simulate(jump_diffusion(), start, TimeGrid(0.5, 1.0, 10), 100, 1)
    assert np.all(ens.X[:, 0, 0] == 2.0)
    np.testing.assert_array_equal(ens.prefix_times, [0.0, 0.2])
    p = ens.path(3)
    assert p(0.1)[0] == 1.0 and p(0.3)[0] == 2.0


def test_serialization_round_trip():
    ens = simulate(two_dim(), flat_start(0.0, d=2), TimeGrid(0.0, 1.0, 6), 7, 2)
    assert Ensemble.from_bytes(ens.to_bytes()).same_as(ens)
    assert Ensemble.from_csv(ens.to_csv()).same_as(ens)
    text = ens.to_csv()
    first, _, rest = text.partition("\n")
    assert Ensemble.from_csv(first + "\n# config={}\n" + rest).same_as(ens)


def test_martingale_increments_have_zero_mean():
    ens = simulate(jump_diffusion(), flat_start(), TimeGrid(0.0, 1.0, 20), 30000, 4)
    total = ens.dM.sum(axis=1)[:, 0]
    assert abs(total.mean()) < 4 * total.std() / np.sqrt(total.size)
    # compensator of unit-rate-2 jumps of size 0.5 is 1.0 dt
    np.testing.assert_allclose(ens.dM, ens.dMc + ens.J - 1.0 * 0.05, atol=1e-12)
    np.testing.assert_allclose(np.diff(ens.X, axis=1), ens.dM, atol=1e-12)


def test_resimulation_restarts_from_outer_state():
    spec = jump_diffusion()
    outer = simulate(spec, flat_start(), TimeGrid(0.0, 1.0, 10), 4, 8)
    inner = resimulate_nodes(spec, outer, 6, 3, 99)
    assert inner.n_paths == 12 and inner.steps == 4
    np.testing.assert_array_equal(inner.X[:, 0, 0], np.repeat(outer.X[:, 6, 0], 3))
    np.testing.assert_array_equal(inner.prefix_values[3:6, :, 0], np.repeat(outer.full_values()[1:2, :6, 0], 3, axis=0))
    tail = resimulate_from(spec, outer.path(0), outer.grid.nodes[6], outer.grid.tail(6), 5, 99)
    assert np.all(tail.X[:, 0, 0] == outer.X[0, 6, 0])
    with pytest.raises(SimulationError):
        resimulate_from(spec, outer.path(0), 0.55, outer.grid.tail(6), 5, 99)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_aborts():
    spec = brownian(sigma=0.0)
    spec = spec.with_(beta=(poly(0, 0.0, 0.0, 1e308),))
    with pytest.raises(SimulationError, match="path"):
        simulate(spec, flat_start(10.0), TimeGrid(0.0, 1.0, 4), 3, 0)


def test_resolve_threads_env(monkeypatch):
    monkeypatch.setenv("PATHDEP_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    with pytest.raises(ValueError):
        resolve_threads(0)
