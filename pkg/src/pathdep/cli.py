"""Command line entry point: ``pathdep {simulate,solve,verify} SCENARIO [options]``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 runtime or numerical error.  ``PATHDEP_THREADS`` is the fallback for ``--threads``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bsde import PicardDivergence, PicardSettings, RegressionBasis, RegressionError, export_solution, solve_bsde
from .calculus import CalculusError
from .functionals import FunctionalError
from .paths import CadlagPath, PathError, PointedPath, constant_path
from .scenario import ScenarioError, ScenarioSpec, load_scenario_file, scenario_to_dict
from .simulator import SimulationError, TimeGrid, empirical_characteristics, simulate
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

CONFIG_ERRORS = (ScenarioError, FunctionalError, PathError, OSError, ValueError, KeyError)
RUNTIME_ERRORS = (PicardDivergence, RegressionError, SimulationError, CalculusError, ArithmeticError, RuntimeError, OSError)


class ConfigError(Exception):
    pass


def _timestamp(args) -> str | None:
    if args.no_timestamp:
        return None
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _threads(args, spec: ScenarioSpec) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        return args.threads
    env = os.environ.get("PATHDEP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"PATHDEP_THREADS={env!r} is not an integer") from None
    return spec.numerics.threads


def _resolve(args) -> ScenarioSpec:
    """Load the scenario and apply numerics overrides from the command line."""
    spec = load_scenario_file(args.scenario)
    changes = {}
    for flag, key in (("paths", "paths"), ("steps", "steps"), ("seed", "seed"), ("picard_kmax", "picard_kmax"), ("tol", "picard_tol")):
        val = getattr(args, flag, None)
        if val is not None:
            changes[key] = val
    if getattr(args, "basis", None):
        changes["basis"] = tuple(b.strip() for b in args.basis.split(",") if b.strip())
    if changes:
        try:
            spec = replace(spec, numerics=replace(spec.numerics, **changes))
        except ScenarioError as exc:
            raise ConfigError(str(exc)) from None
    return spec


def parse_start(text: str | None, path_file: str | None, spec: ScenarioSpec) -> PointedPath:
    """``S`` or ``S:X1,...,Xd`` for a flat path; ``--start-path`` gives a CSV history instead.

    Without either the start is ``(0, flat 0)``.
    """
    d, T = spec.d, spec.horizon
    s, level = 0.0, np.zeros(d)
    if text:
        head, _, tail = text.partition(":")
        try:
            s = float(head)
            if tail:
                level = np.array([float(v) for v in tail.split(",")])
        except ValueError:
            raise ConfigError(f"--start: cannot parse {text!r}; expected S or S:X1,...,Xd") from None
        if level.size != d:
            raise ConfigError(f"--start: expected {d} coordinates, got {level.size}")
    if not 0.0 <= s <= T:
        raise ConfigError(f"--start: s={s} outside [0, {T}]")
    if path_file:
        eta = CadlagPath.from_csv(Path(path_file).read_text(encoding="utf-8"))
        if eta.dim != d:
            raise ConfigError(f"--start-path: expected dimension {d}, got {eta.dim}")
        return PointedPath(s, eta)
    return PointedPath(s, constant_path(level, T))


def _config(args, spec: ScenarioSpec, start: PointedPath | None = None) -> dict:
    # thread count is left out so outputs do not depend on it
    cfg = {"command": args.command, "scenario_file": str(args.scenario), "scenario": scenario_to_dict(spec)}
    if start is not None:
        cfg["start"] = {"s": start.s, "times": start.eta.times.tolist(), "values": start.eta.values.tolist()}
    for key in ("suite", "format", "start_arg"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def prepare(args) -> tuple[ScenarioSpec, PointedPath | None, int, dict]:
    """Everything that can fail with a configuration error (exit 2)."""
    spec = _resolve(args)
    start = parse_start(args.start, args.start_path, spec) if hasattr(args, "start_path") else None
    threads = _threads(args, spec)
    RegressionBasis(spec.numerics.basis, spec.numerics.ridge)
    return spec, start, threads, _config(args, spec, start)


def cmd_simulate(args, spec, start, threads, cfg) -> int:
    num = spec.numerics
    grid = TimeGrid(start.s, spec.horizon, max(1, int(round(num.steps * (spec.horizon - start.s) / spec.horizon))))
    out = _out_dir(args)

    ens = simulate(spec, start, grid, num.paths, num.seed, threads)
    if args.format == "binary":
        (out / "ensemble.bin").write_bytes(ens.to_bytes())
        _write_json(out / "ensemble.config.json", cfg)
    else:
        text = ens.to_csv()
        first, _, rest = text.partition("\n")
        (out / "ensemble.csv").write_text(first + "\n# config=" + json.dumps(cfg, sort_keys=True) + "\n" + rest, encoding="utf-8")
    report = {"characteristics": empirical_characteristics(ens, spec).to_dict(), "config": cfg}
    ts = _timestamp(args)
    if ts:
        report["timestamp"] = ts
    _write_json(out / "characteristics.json", report)
    print(f"simulated {num.paths} paths x {grid.steps} steps -> {out}")
    return EXIT_OK


def cmd_solve(args, spec, start, threads, cfg) -> int:
    num = spec.numerics
    grid = TimeGrid(start.s, spec.horizon, max(1, int(round(num.steps * (spec.horizon - start.s) / spec.horizon))))
    basis = RegressionBasis(num.basis, num.ridge)
    out = _out_dir(args)

    sol = solve_bsde(spec, start, grid, basis, num.paths, PicardSettings(num.picard_kmax, num.picard_tol), num.seed, threads, keep_ensemble=False)
    (out / "solution.csv").write_text(export_solution(sol, "csv", cfg), encoding="utf-8")
    summary = json.loads(export_solution(sol, "json", cfg))
    ts = _timestamp(args)
    if ts:
        summary["timestamp"] = ts
    _write_json(out / "summary.json", summary)
    print(f"Y_s = {sol.Y_s:.6g} +/- {sol.Y_s_stderr:.2g} after {sol.iterations} Picard iterations -> {out}")
    return EXIT_OK


def cmd_verify(args, spec, start, threads, cfg) -> int:
    report = run_suite(spec, args.suite, threads=threads)
    sys.stdout.write(report.to_text())
    if args.out:
        out = _out_dir(args)
        (out / "verdict.json").write_text(report.to_json(cfg, _timestamp(args)) + "\n", encoding="utf-8")
        (out / "verdict.txt").write_text(report.to_text(), encoding="utf-8")
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pathdep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("scenario", help="scenario TOML file")
        sp.add_argument("--seed", type=int, help="override numerics.seed")
        sp.add_argument("--paths", type=int, help="override numerics.paths")
        sp.add_argument("--steps", type=int, help="override numerics.steps (steps over the full horizon)")
        sp.add_argument("--threads", type=int, help="worker threads (fallback: PATHDEP_THREADS)")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field from outputs")

    def start_opts(sp):
        sp.add_argument("--start", dest="start", help="start point S or S:X1,...,Xd (default 0, flat 0)")
        sp.add_argument("--start-path", help="CSV history for the start point (time S from --start)")

    s = sub.add_parser("simulate", help="simulate an ensemble and report its characteristics")
    common(s, "out")
    start_opts(s)
    s.add_argument("--format", choices=("csv", "binary"), default="csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", help="solve the BSDE by regression and Picard iteration")
    common(s, "out")
    start_opts(s)
    s.add_argument("--picard-kmax", type=int, help="override numerics.picard_kmax")
    s.add_argument("--tol", type=float, help="override numerics.picard_tol")
    s.add_argument("--basis", help="comma separated regression features, e.g. 1,x,xx,int")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify", help="run verification suites; nonzero exit iff a check fails")
    common(s, None)
    s.add_argument("--suite", choices=SUITES, default="all")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.start_arg = getattr(args, "start", None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        ctx = prepare(args)
    except (ConfigError, *CONFIG_ERRORS) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, *ctx)
    except (*RUNTIME_ERRORS, ValueError) as exc:
        return _runtime(exc)


def _runtime(exc: BaseException) -> int:
    print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
    deltas = getattr(exc, "deltas", None)
    if deltas is not None:
        print("picard deltas: " + ", ".join(f"{d:.3e}" for d in deltas), file=sys.stderr)
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
