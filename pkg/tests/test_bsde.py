import math
import warnings

import numpy as np
import pytest

from helpers import brownian, flat_start, jump_diffusion
from pathdep.bsde import (
    PicardDivergence,
    PicardSettings,
    RegressionBasis,
    RegressionError,
    RegressionField,
    bracket_consistency,
    default_panel,
    evaluate_Y_field,
    export_solution,
    load_solution,
    martingale_test,
    picard_diagnostics,
    solve_bsde,
)
from pathdep.functionals import const, coord, poly, running_integral
from pathdep.paths import PointedPath, constant_path
from pathdep.scenario import Driver, ScenarioSpec
from pathdep.simulator import TimeGrid, simulate

GRID = TimeGrid(0.0, 1.0, 50)


@pytest.fixture(scope="module")
def heat():
    spec = brownian(sigma=1.0, xi=poly(0, 0, 0, 1))
    return spec, solve_bsde(spec, flat_start(1.0), GRID, n_paths=20000, seed=3)


def test_heat_equation_oracle(heat):
    spec, sol = heat
    # Y_0 = x0^2 + sigma^2 T, Z = 2 sigma^2 w(t)
    assert abs(sol.Y_s - 2.0) <= 4 * sol.Y_s_stderr
    zo = 2 * sol.ensemble.X[:, :-1, 0]
    assert np.sqrt(np.mean((sol.Z[..., 0] - zo) ** 2) / np.mean(zo**2)) < 0.1
    assert sol.converged and sol.iterations == 2
    assert abs(martingale_test(sol)) < 4
    assert np.all(np.abs(bracket_consistency(sol)) < 4)
    np.testing.assert_array_equal(sol.Y[:, -1], sol.ensemble.X[:, -1, 0] ** 2)


def test_linear_driver_contracts():
    spec = brownian(driver=Driver("affine_y", (-1.0,)))
    sol = solve_bsde(spec, flat_start(1.0), GRID, n_paths=10000, seed=4, picard=PicardSettings(30, 1e-10))
    assert abs(sol.Y_s - math.exp(-1.0)) <= 4 * sol.Y_s_stderr
    diag = picard_diagnostics(sol, 1e-10)
    assert diag.strictly_decreasing and diag.contracting
    assert diag.ratio < 0.5


def test_constant_terminal_gives_zero_z():
    spec = brownian(xi=const(2.5))
    sol = solve_bsde(spec, flat_start(1.0), GRID, n_paths=500, seed=1)
    np.testing.assert_allclose(sol.Y, 2.5, atol=1e-12)
    np.testing.assert_allclose(sol.Z, 0.0, atol=1e-12)
    assert picard_diagnostics(sol).message in ("contracting", "non-contraction detected")


def test_single_iteration_is_flagged():
    sol = solve_bsde(brownian(), flat_start(1.0), GRID, n_paths=200, seed=1, picard=PicardSettings(1, 0.0))
    assert picard_diagnostics(sol).message == "insufficient iterations"


def test_quadratic_driver_diverges():
    spec = brownian(xi=poly(0, 0, 0, 1), driver=Driver("quadratic_y", (3.0,)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(PicardDivergence) as exc:
            solve_bsde(spec, flat_start(1.0), TimeGrid(0.0, 1.0, 20), n_paths=2000, seed=1)
    assert len(exc.value.deltas) >= 4


def test_rank_deficient_design_without_ridge():
    spec = ScenarioSpec(2, 1.0, (const(0), const(0)), ((const(1), const(0)), (const(1), const(0))), coord(0))
    start = PointedPath(0.0, constant_path([0.0, 0.0], 1.0))
    with pytest.raises(RegressionError, match="node 1"):
        solve_bsde(spec, start, TimeGrid(0.0, 1.0, 5), RegressionBasis(("1", "x"), ridge=0.0), 500, seed=1)
    sol = solve_bsde(spec, start, TimeGrid(0.0, 1.0, 5), RegressionBasis(("1", "x")), 500, seed=1)
    assert np.isfinite(sol.Y_s)


def test_unknown_feature_rejected():
    with pytest.raises(ValueError):
        RegressionBasis(("1", "cubic"))
    with pytest.raises(ValueError):
        PicardSettings(0)


def test_thread_count_does_not_change_solution():
    spec = jump_diffusion(xi=poly(0, 0, 0, 1))
    a = solve_bsde(spec, flat_start(1.0), TimeGrid(0.0, 1.0, 10), n_paths=9000, seed=2, threads=1)
    b = solve_bsde(spec, flat_start(1.0), TimeGrid(0.0, 1.0, 10), n_paths=9000, seed=2, threads=4)
    assert export_solution(a, "binary") == export_solution(b, "binary")


def test_export_round_trips():
    sol = solve_bsde(jump_diffusion(), flat_start(1.0), TimeGrid(0.0, 1.0, 4), n_paths=6, seed=2)
    for fmt in ("csv", "binary"):
        back = load_solution(export_solution(sol, fmt, {"k": 1}), fmt)
        np.testing.assert_array_equal(back.Y, sol.Y)
        np.testing.assert_array_equal(back.Z, sol.Z)
        np.testing.assert_array_equal(back.grid.nodes, sol.grid.nodes)
        assert back.deltas == sol.deltas and back.Y_s == sol.Y_s
    summary = load_solution(export_solution(sol, "json"), "json")
    assert set(summary) >= {"Y_s", "stderr", "iterations", "deltas"}
    header = export_solution(sol, "csv").splitlines()[1]
    assert header == "t,path_id,Y,Z_1"
    with pytest.raises(ValueError):
        export_solution(sol, "parquet")


def test_regression_field_extends_to_fresh_ensembles(heat):
    spec, sol = heat
    fresh = simulate(spec, flat_start(1.0), GRID, 3000, 77)
    y = RegressionField(sol, spec, "Y").on(fresh)
    z = RegressionField(sol, spec, "Z").on(fresh)
    np.testing.assert_array_equal(y[:, -1], fresh.X[:, -1, 0] ** 2)
    assert y.shape == (3000, 51) and z.shape == (3000, 51, 1)
    np.testing.assert_array_equal(z[:, -1], z[:, -2])
    assert np.sqrt(np.mean((y[:, 25] - fresh.X[:, 25, 0] ** 2 - 0.5) ** 2)) < 0.05


def test_panel_and_terminal_field():
    spec = jump_diffusion(xi=running_integral(0))
    panel = default_panel(spec)
    assert [p.s for p in panel] == [0.0, 0.5, 0.5, 0.5, 0.9]
    assert panel[3].eta.values[-1, 0] == 2.0
    at_T = PointedPath(1.0, constant_path(3.0, 1.0))
    assert evaluate_Y_field(spec, [at_T]) == [(3.0, 0.0)]


def test_path_dependent_oracle_with_integral_feature():
    spec = jump_diffusion(xi=running_integral(0))
    basis = RegressionBasis(("1", "x", "xx", "int"))
    sol = solve_bsde(spec, flat_start(1.0), TimeGrid(0.0, 1.0, 50), basis, 20000, seed=5)
    # Y_0 = x0 T
    assert abs(sol.Y_s - 1.0) <= 4 * sol.Y_s_stderr
    t = sol.grid.nodes[1:]
    zo = (1.0 - t) * (0.49 + 0.5)
    rel = np.sqrt(np.mean((sol.Z[..., 0] - zo[None, :]) ** 2) / np.mean(zo**2))
    assert rel < 0.1
