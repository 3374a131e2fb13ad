"""End-to-end checks of the solver against the analytic objects.

Each check returns a :class:`CheckResult`; checks are collected in a
:class:`VerificationReport` that renders to JSON and to a text summary.
Statistical checks pass when every |z| is at most ``threshold`` (4 by default).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bsde import PicardSettings, RegressionBasis, RegressionField, default_panel, solve_bsde
from .calculus import DerivativeParams, GeneratorSource, gamma_nodes, ito_residual, operator_nodes
from .functionals import FunctionalSpec, const, coord, is_smooth
from .montecarlo import BiasedField, FunctionalField, GammaXField, mild_residuals_on, z_score
from .paths import PointedPath, constant_path
from .rng import substream_seed
from .scenario import Driver, ScenarioSpec
from .simulator import TimeGrid, simulate

__all__ = [
    "CheckResult",
    "VerificationReport",
    "panel_grid",
    "verify_identification",
    "classical_to_mild_check",
    "bracket_gamma_check",
    "z_identification_check",
    "ito_refinement_check",
    "run_suite",
    "SUITES",
]

SUITES = ("mild", "ito", "bracket", "zid", "all")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    statistic: float
    threshold: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "passed": self.passed,
            "statistic": _jsonable(self.statistic),
            "threshold": self.threshold,
            "details": _jsonable(self.details),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def extend(self, checks) -> "VerificationReport":
        self.checks.extend(checks)
        return self

    def to_dict(self, config: dict | None = None, timestamp: str | None = None) -> dict:
        out: dict = {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}
        if config is not None:
            out["config"] = config
        if timestamp is not None:
            out["timestamp"] = timestamp
        return out

    def to_json(self, config: dict | None = None, timestamp: str | None = None) -> str:
        return json.dumps(self.to_dict(config, timestamp), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.suite}/{c.name}: statistic={c.statistic:.4g} (threshold {c.threshold:g})")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} ({sum(c.passed for c in self.checks)}/{len(self.checks)} checks)")
        return "\n".join(lines) + "\n"


def _describe(start: PointedPath) -> dict:
    return {"s": start.s, "eta_s": start.value().tolist(), "grid_points": int(start.eta.times.size)}


def panel_grid(spec: ScenarioSpec, start: PointedPath, steps: int | None = None) -> TimeGrid:
    """Grid from ``s`` to ``T`` with the scenario's step size."""
    steps = steps or spec.numerics.steps
    n = max(1, int(round(steps * (spec.horizon - start.s) / spec.horizon)))
    return TimeGrid(start.s, spec.horizon, n)


def _settings(spec: ScenarioSpec):
    num = spec.numerics
    return RegressionBasis(num.basis, num.ridge), PicardSettings(num.picard_kmax, num.picard_tol)


def _mild_check(spec, Y, Z, start, grid, n_paths, seed, threads, y_s_stderr, name, threshold, suite="mild"):
    ens = simulate(spec, start, grid, n_paths, seed, threads)
    rep = mild_residuals_on(spec, Y, Z, ens)
    eta_s = start.value()
    zs = []
    rows = []
    for r in rep.residuals:
        factor = 1.0 if r.equation_index == 0 else abs(float(eta_s[r.equation_index - 1]))
        se = math.hypot(r.stderr, factor * y_s_stderr)
        z = z_score(r.residual, se, abs(rep.Y_s) + 1.0)
        zs.append(z)
        rows.append({"equation_index": r.equation_index, "residual": r.residual, "stderr": se, "z_score": z})
    stat = max(abs(z) for z in zs)
    details = {"start": _describe(start), "Y_s": rep.Y_s, "residuals": rows, "seed": seed, "n_paths": n_paths, "steps": grid.steps}
    return CheckResult(suite, name, bool(stat <= threshold), stat, threshold, details)


def verify_identification(
    spec: ScenarioSpec,
    panel: list[PointedPath] | None = None,
    bias: float | None = None,
    n_paths: int | None = None,
    steps: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
    threshold: float | None = None,
) -> list[CheckResult]:
    """Solve at each panel point and test the regression fields against the mild equations.

    ``bias`` (default: the scenario's ``oracle.y_bias``) is added to the ``Y`` field
    as a negative control.  Residuals are computed on an independent ensemble; the
    uncertainty of ``Y_s`` from the solve is added to each residual's standard error.
    """
    num = spec.numerics
    panel = panel or default_panel(spec)
    n_paths = n_paths or num.paths
    seed = num.seed if seed is None else seed
    threshold = num.z_threshold if threshold is None else threshold
    if bias is None:
        bias = spec.oracle.y_bias if spec.oracle is not None else 0.0
    basis, picard = _settings(spec)
    out = []
    for j, start in enumerate(panel):
        grid = panel_grid(spec, start, steps)
        sol = solve_bsde(spec, start, grid, basis, n_paths, picard, seed, threads, keep_ensemble=False)
        Y = RegressionField(sol, spec, "Y")
        if bias:
            Y = BiasedField(Y, bias)
        Z = RegressionField(sol, spec, "Z")
        res_paths = num.residual_paths or n_paths
        chk = _mild_check(spec, Y, Z, start, grid, res_paths, substream_seed(seed, 2, j), threads, sol.Y_s_stderr, f"identification[{j}]", threshold)
        chk.details.update({"picard_iterations": sol.iterations, "deltas": list(sol.deltas), "bias": bias})
        out.append(chk)
    return out


def classical_to_mild_check(
    phi: FunctionalSpec,
    spec: ScenarioSpec,
    panel: list[PointedPath] | None = None,
    n_paths: int | None = None,
    steps: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
    params: DerivativeParams | None = None,
    threshold: float | None = None,
    bias: float | None = None,
) -> list[CheckResult]:
    """Mild residuals of ``(Phi, Gamma(Phi, X))`` with ``xi = Phi_T`` and driver ``f = -A Phi``.

    ``bias`` (default: the scenario's ``oracle.y_bias``) shifts the candidate ``Phi``.
    """
    num = spec.numerics
    if bias is None:
        bias = spec.oracle.y_bias if spec.oracle is not None else 0.0
    Y = BiasedField(FunctionalField(phi), bias) if bias else FunctionalField(phi)
    panel = panel or default_panel(spec)
    n_paths = n_paths or num.paths
    seed = num.seed if seed is None else seed
    threshold = num.z_threshold if threshold is None else threshold
    check_spec = replace(spec, xi=phi, driver=Driver("zero", source=GeneratorSource(phi, spec, params)))
    out = []
    for j, start in enumerate(panel):
        grid = panel_grid(spec, start, steps)
        out.append(
            _mild_check(
                check_spec,
                Y,
                GammaXField(phi, spec, params),
                start,
                grid,
                n_paths,
                substream_seed(seed, 3, j),
                threads,
                0.0,
                f"classical[{j}]",
                threshold,
            )
        )
    return out


def bracket_gamma_check(
    phi: FunctionalSpec,
    psi: FunctionalSpec,
    spec: ScenarioSpec,
    start: PointedPath,
    n_paths: int | None = None,
    steps: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
    params: DerivativeParams | None = None,
    threshold: float | None = None,
    name: str | None = None,
) -> CheckResult:
    """Realized covariation of ``M[Phi]`` and ``M[Psi]`` against ``sum Gamma(Phi, Psi) dt``.

    ``dM[Phi]_k = Phi_{k+1} - Phi_k - A Phi_k dt``; ``Gamma`` is evaluated at ``t_{k+1}`` on
    the path held flat over the step (the state just before any jump at ``t_{k+1}``).
    """
    num = spec.numerics
    n_paths = n_paths or num.paths
    seed = num.seed if seed is None else seed
    threshold = num.z_threshold if threshold is None else threshold
    grid = panel_grid(spec, start, steps)
    ens = simulate(spec, start, grid, n_paths, seed, threads)
    times, values = ens.full_times(), ens.full_values()
    off = ens.offset
    dt = grid.dt

    def mart_inc(f):
        v = ens.node_values(f)
        a = operator_nodes(f, spec, times, values, params).total[:, off:]
        dv, adt = v[:, 1:] - v[:, :-1], a[:, :-1] * dt
        return dv - adt, np.abs(dv) + np.abs(adt)

    m_phi, size_phi = mart_inc(phi)
    m_psi, size_psi = mart_inc(psi)
    realized = np.sum(m_phi * m_psi, axis=1)
    bump = np.zeros(values.shape)
    bump[:, off + 1 :] = ens.X[:, :-1] - ens.X[:, 1:]
    gam = gamma_nodes(phi, psi, spec, times, values, params, bump=bump)[:, off + 1 :]
    model = gam @ dt
    diff = realized - model
    # cancellation in dPhi - A Phi dt leaves round-off of this relative size
    roundoff = 1e-10 * float(np.mean(np.sum(size_phi * size_psi, axis=1) + np.abs(gam) @ dt))
    se = max(float(diff.std(ddof=1) / math.sqrt(n_paths)), roundoff)
    z = z_score(float(diff.mean()), se, float(np.mean(np.abs(model))) + 1.0)
    details = {
        "phi": str(phi),
        "psi": str(psi),
        "start": _describe(start),
        "realized_mean": float(realized.mean()),
        "gamma_integral_mean": float(model.mean()),
        "stderr": se,
        "z_score": z,
        "n_paths": n_paths,
        "steps": grid.steps,
        "seed": seed,
    }
    return CheckResult("bracket", name or f"bracket[{phi},{psi}]", bool(abs(z) <= threshold), abs(z), threshold, details)


def _rms_rel(z: np.ndarray, zo: np.ndarray) -> tuple[float, float, float]:
    err = float(np.sqrt(np.mean((z - zo) ** 2)))
    scale = float(np.sqrt(np.mean(zo**2)))
    return (err / scale if scale > 0 else err), err, scale


def z_identification_check(
    spec: ScenarioSpec,
    oracle: FunctionalSpec | None = None,
    panel: list[PointedPath] | None = None,
    n_paths: int | None = None,
    steps: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
    params: DerivativeParams | None = None,
    tol: float | None = None,
) -> list[CheckResult]:
    """Node-wise RMS relative error of the solver's ``Z`` against ``Gamma(Y_oracle, X)``.

    ``Gamma`` is taken at ``t_{k+1}`` on the path held flat over ``[t_k, t_{k+1}]``, the
    bracket density of the Euler step.  When the oracle ``Z`` vanishes the absolute RMS
    is compared with ``tol`` instead.
    """
    num = spec.numerics
    if oracle is None:
        if spec.oracle is None or spec.oracle.y is None:
            raise ValueError("z identification needs an oracle Y")
        oracle = spec.oracle.y
    panel = panel or default_panel(spec)
    n_paths = n_paths or num.paths
    seed = num.seed if seed is None else seed
    tol = num.z_rel_tol if tol is None else tol
    basis, picard = _settings(spec)
    out = []
    for j, start in enumerate(panel):
        grid = panel_grid(spec, start, steps)
        sol = solve_bsde(spec, start, grid, basis, n_paths, picard, seed, threads)
        zo = GammaXField(oracle, spec, params, pre_step=True).on(sol.ensemble)[:, :-1]
        rel, err, scale = _rms_rel(sol.Z, zo)
        details = {"start": _describe(start), "rms_error": err, "rms_oracle": scale, "Y_s": sol.Y_s, "n_paths": n_paths, "steps": grid.steps}
        out.append(CheckResult("zid", f"z_identification[{j}]", bool(rel <= tol), rel, tol, details))
    return out


def ito_refinement_check(
    phi: FunctionalSpec,
    spec: ScenarioSpec,
    start: PointedPath | None = None,
    steps: tuple[int, ...] | None = None,
    n_paths: int | None = None,
    seed: int | None = None,
    threads: int | None = None,
    params: DerivativeParams | None = None,
) -> CheckResult:
    """Ensemble-RMS functional Ito residual must decrease strictly under grid refinement."""
    num = spec.numerics
    start = start or default_panel(spec)[0]
    steps = steps or num.ito_steps
    n_paths = n_paths or num.ito_paths
    seed = num.seed if seed is None else seed
    rms = []
    for n in steps:
        grid = panel_grid(spec, start, n)
        ens = simulate(spec, start, grid, n_paths, seed, threads)
        r = ito_residual(phi, spec, ens, params)
        rms.append(float(np.sqrt(np.mean(r**2))))
    exact = max(rms) <= 1e-12  # e.g. affine functionals, whose residual is round-off
    ok = exact or all(b < a for a, b in zip(rms, rms[1:]))
    stat = 0.0 if exact or len(rms) < 2 else max(b / a for a, b in zip(rms, rms[1:]))
    details = {"phi": str(phi), "steps": list(steps), "dt": [(spec.horizon - start.s) / n for n in steps], "rms": rms, "n_paths": n_paths}
    return CheckResult("ito", f"ito[{phi}]", bool(ok), stat, 1.0, details)


def run_suite(
    spec: ScenarioSpec,
    suite: str = "all",
    seed: int | None = None,
    n_paths: int | None = None,
    threads: int | None = None,
    panel: list[PointedPath] | None = None,
) -> VerificationReport:
    """Dispatch one of ``mild``, ``ito``, ``bracket``, ``zid`` or ``all``."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    report = VerificationReport()
    run = (lambda s: suite in (s, "all"))
    panel = panel or default_panel(spec)
    oracle = spec.oracle.y if spec.oracle is not None else None
    if run("mild"):
        report.extend(verify_identification(spec, panel, n_paths=n_paths, seed=seed, threads=threads))
        if oracle is not None and is_smooth(oracle):
            report.extend(classical_to_mild_check(oracle, spec, panel, n_paths=n_paths, seed=seed, threads=threads))
    if run("ito"):
        target = oracle if oracle is not None else spec.xi
        report.extend([ito_refinement_check(target, spec, panel[0], seed=seed, threads=threads)])
    if run("bracket"):
        start = panel[0]
        pairs = [(coord(i), coord(i)) for i in range(spec.d)] + [(coord(0), spec.xi), (const(1.0), coord(0))]
        if oracle is not None:
            pairs.append((coord(0), oracle))
        for j, (a, b) in enumerate(pairs):
            report.extend([bracket_gamma_check(a, b, spec, start, n_paths=n_paths, seed=seed, threads=threads, name=f"bracket[{j}]")])
    if run("zid") and oracle is not None:
        report.extend(z_identification_check(spec, oracle, panel, n_paths=n_paths, seed=seed, threads=threads))
    return report
