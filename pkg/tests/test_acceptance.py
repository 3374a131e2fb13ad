"""Acceptance criteria 1-10 at their stated tolerances; one pass/fail line each."""

import math
from pathlib import Path

import numpy as np
import pytest

from helpers import jump_diffusion, two_dim
from pathdep.bsde import default_panel, export_solution, solve_bsde
from pathdep.calculus import gamma_product_rule, gamma_with_X
from pathdep.functionals import FunctionalSpec, const, coord, poly, running_integral, time_weighted
from pathdep.paths import CadlagPath
from pathdep.scenario import load_scenario_file
from pathdep.simulator import simulate
from pathdep.verify import (
    _settings,
    bracket_gamma_check,
    classical_to_mild_check,
    ito_refinement_check,
    panel_grid,
    run_suite,
    verify_identification,
)

SCEN = Path(__file__).resolve().parents[1] / "scenarios"
ORACLES = ("drift_jump_2d", "brownian_x2", "pure_jump_x2", "linear_driver")

pytestmark = pytest.mark.acceptance


def load(name):
    return load_scenario_file(SCEN / f"{name}.toml")


def solve_panel(spec, keep=False):
    basis, picard = _settings(spec)
    out = []
    for j, start in enumerate(default_panel(spec)):
        grid = panel_grid(spec, start)
        out.append((start, solve_bsde(spec, start, grid, basis, spec.numerics.paths, picard, spec.numerics.seed + j, keep_ensemble=keep)))
    return out


def y_within(panel, oracle):
    """Largest |Y_s - oracle(s, eta(s))| in units of the solver stderr."""
    zs = [abs(sol.Y_s - oracle(start.s, start.value())) / sol.Y_s_stderr for start, sol in panel]
    return max(zs)


def z_rms_rel(panel, z_oracle):
    """Worst panel RMS relative error of Z against ``z_oracle(t_pre, X_pre)``.

    The oracle is evaluated at ``t_{k+1}`` on the path held flat over the step.
    """
    worst = 0.0
    for _, sol in panel:
        ens = sol.ensemble
        t = ens.grid.nodes[1:][None, :, None]
        zo = z_oracle(t, ens.X[:, :-1])
        worst = max(worst, float(np.sqrt(np.mean((sol.Z - zo) ** 2)) / np.sqrt(np.mean(zo**2))))
    return worst


def test_criterion_01_drift_oracle(criterion):
    spec = load("drift_jump_2d")
    b, T = 0.3, spec.horizon
    z = y_within(solve_panel(spec), lambda s, x: x[0] + b * (T - s))
    assert criterion(1, "drift oracle Y_s = eta(s) + b(T - s)", z <= 4, f"max |z| = {z:.2f} (<= 4)")


def test_criterion_02_brownian_square(criterion):
    spec = load("brownian_x2")
    sigma2, T = 1.0, spec.horizon
    panel = solve_panel(spec, keep=True)
    z = y_within(panel, lambda s, x: x[0] ** 2 + sigma2 * (T - s))
    rel = z_rms_rel(panel, lambda t, x: 2 * sigma2 * x)
    ok = z <= 4 and rel <= 0.10
    assert criterion(2, "Brownian X_T^2 oracle", ok, f"max |z| = {z:.2f} (<= 4), Z rms rel = {rel:.3f} (<= 0.10)")


def test_criterion_03_pure_jump_square(criterion):
    spec = load("pure_jump_x2")
    lam, T = 2.0, spec.horizon
    panel = solve_panel(spec, keep=True)
    z = y_within(panel, lambda s, x: x[0] ** 2 + lam * (T - s))
    rel = z_rms_rel(panel, lambda t, x: lam * (2 * x + 1))
    ok = z <= 4 and rel <= 0.10
    assert criterion(3, "pure-jump X_T^2 oracle", ok, f"max |z| = {z:.2f} (<= 4), Z rms rel = {rel:.3f} (<= 0.10)")


def test_criterion_04_linear_driver(criterion):
    spec = load("linear_driver")
    c, T = 1.0, spec.horizon
    panel = solve_panel(spec)
    z = y_within(panel, lambda s, x: math.exp(-c * (T - s)) * x[0])
    mono = all(all(b < a for a, b in zip(sol.deltas, sol.deltas[1:])) for _, sol in panel)
    assert criterion(4, "linear driver f = -cy oracle", z <= 4 and mono, f"max |z| = {z:.2f} (<= 4), deltas decreasing: {mono}")


def test_criterion_05_path_dependent_classical(criterion):
    spec = load("path_dependent")
    phi = spec.oracle.y
    checks = classical_to_mild_check(phi, spec)
    # sigma^2 + lambda g^2 for sigma = 0.7, one atom of weight 2 and size 0.5
    k, T = 0.49 + 2.0 * 0.25, spec.horizon
    rel = z_rms_rel(solve_panel(spec, keep=True), lambda t, x: (T - t) * k * np.ones_like(x))
    ok = all(c.passed for c in checks) and len(checks) == 5 and rel <= 0.10
    stat = max(c.statistic for c in checks)
    assert criterion(5, "path-dependent classical oracle", ok, f"max |z| = {stat:.2f} over 5 panel points, Z rms rel = {rel:.3f} (<= 0.10)")


def test_criterion_06_mild_residuals(criterion):
    stats = {}
    for name in ORACLES:
        checks = verify_identification(load(name))
        stats[name] = (all(c.passed for c in checks), max(c.statistic for c in checks))
    bad = verify_identification(load_scenario_file(SCEN / "fixtures" / "biased_candidate.toml"))
    neg_z = min(abs(c.details["residuals"][0]["z_score"]) for c in bad)
    ok = all(p for p, _ in stats.values()) and neg_z > 4
    detail = ", ".join(f"{n} max |z| = {s:.2f}" for n, (_, s) in stats.items()) + f"; +0.5 bias min |z| = {neg_z:.1f} (> 4)"
    assert criterion(6, "mild-equation residuals", ok, detail)


def _catalog():
    leaves = [
        const(1.5),
        coord(0),
        coord(1),
        poly(0, 0.5, -1.0, 0.3),
        poly(1, 0.0, 0.0, 1.0),
        running_integral(0),
        running_integral(1),
        time_weighted((1.0, -1.0)),
        time_weighted((0.5, 2.0), coord(1)),
    ]
    products = [a * b for i, a in enumerate(leaves) for b in leaves[i:]]
    nested = [
        FunctionalSpec("scale", (-0.7,), (coord(0) * running_integral(1) + poly(1, 0.0, 1.0, 0.5),)),
        time_weighted((1.0, -1.0), coord(0)) * coord(1) * coord(1),
        running_integral(0) + time_weighted((1.0, -1.0), coord(0)),
    ]
    return leaves + products + nested


def _random_path(rng):
    m = int(rng.integers(1, 7))
    times = np.concatenate([[0.0], np.sort(rng.uniform(0.0, 1.0, m - 1))])
    return CadlagPath(times, rng.normal(0.0, 1.5, size=(m, 2)), 1.0)


def test_criterion_07_gamma_consistency(criterion):
    spec = two_dim()
    rng = np.random.default_rng(2024)
    catalog = _catalog()
    worst = 0.0
    for phi in catalog:
        for _ in range(100):
            path, t = _random_path(rng), float(rng.uniform(0.0, 1.0))
            direct = gamma_with_X(phi, spec, t, path)
            for i in range(spec.d):
                via = gamma_product_rule(phi, coord(i), spec, t, path)
                worst = max(worst, abs(via - direct[i]) / (1.0 + abs(direct[i])))
    ok = worst <= 1e-6
    assert criterion(7, "Gamma product rule vs Gamma(., X)", ok, f"{len(catalog)} functionals x 100 draws, worst scaled gap = {worst:.1e} (<= 1e-6)")


def test_criterion_08_bracket_identity(criterion):
    spec = jump_diffusion()
    start = default_panel(spec)[0]
    k, T, steps = 0.49 + 2.0 * 0.25, spec.horizon, 100
    pd = running_integral(0) + time_weighted((1.0, -1.0), coord(0))
    pairs = {"X,X": (coord(0), coord(0)), "const,X": (const(2.0), coord(0)), "X,int": (coord(0), pd)}
    res = {n: bracket_gamma_check(a, b, spec, start, n_paths=50_000, steps=steps, seed=8) for n, (a, b) in pairs.items()}
    # closed forms for the Gamma side, right-endpoint sums on the grid
    dt = T / steps
    expect = {"X,X": k * T, "const,X": 0.0, "X,int": k * dt * sum(T - dt * j for j in range(1, steps + 1))}
    closed = all(abs(res[n].details["gamma_integral_mean"] - expect[n]) <= 1e-9 for n in pairs)
    ok = all(r.passed for r in res.values()) and closed
    detail = ", ".join(f"({n}) |z| = {r.statistic:.2f}" for n, r in res.items()) + f"; closed-form Gamma side: {closed}"
    assert criterion(8, "bracket identity", ok, detail)


def test_criterion_09_ito_refinement(criterion):
    spec = jump_diffusion()
    chk = ito_refinement_check(poly(0, 0.0, 0.0, 1.0), spec, default_panel(spec)[0], steps=(250, 1000, 4000), n_paths=2000, seed=9)
    rms = ", ".join(f"{r:.2e}" for r in chk.details["rms"])
    ok = chk.passed and chk.details["dt"] == [4e-3, 1e-3, 2.5e-4]
    assert criterion(9, "functional Ito residual under refinement", ok, f"rms = [{rms}] at dt = 4e-3, 1e-3, 2.5e-4")


def test_criterion_10_determinism(criterion):
    spec = load("drift_jump_2d")
    start = default_panel(spec)[2]
    grid = panel_grid(spec, start, 40)
    basis, picard = _settings(spec)
    outputs = []
    for workers in (1, 4, 8):
        ens = simulate(spec, start, grid, 10_000, 31, workers)
        sol = solve_bsde(spec, start, grid, basis, 10_000, picard, 31, workers)
        report = run_suite(spec, "bracket", seed=31, n_paths=10_000, threads=workers)
        outputs.append((ens.to_bytes(), export_solution(sol, "csv"), report.to_json({"seed": 31})))
    ok = outputs[0] == outputs[1] == outputs[2]
    assert criterion(10, "determinism across 1, 4 and 8 workers", ok, "ensemble, solution and verdict bytes identical" if ok else "outputs differ")
