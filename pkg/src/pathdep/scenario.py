"""Problem instances: coefficients, jump measure, driver, terminal condition, clock.

Scenario files are TOML documents with the sections ``[model]``, ``[driver]``,
``[terminal]``, ``[numerics]`` and an optional ``[oracle]``; functionals are
written in the text form of :mod:`pathdep.functionals`.  See
``docs/scenario_format.md`` for the grammar.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .functionals import (
    FunctionalError,
    FunctionalSpec,
    evaluate_nodes,
    growth,
    max_coordinate,
    parse_functional,
)

__all__ = [
    "SCHEMA_VERSION",
    "ScenarioError",
    "UnboundedCoefficientError",
    "AtomicJumpMeasure",
    "Driver",
    "DRIVER_KINDS",
    "Numerics",
    "Oracle",
    "ScenarioSpec",
    "Check",
    "ValidationReport",
    "load_scenario",
    "load_scenario_file",
    "dump_scenario",
    "validate_scenario",
]

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Schema or invariant violation in a scenario document."""


class UnboundedCoefficientError(ScenarioError):
    """A coefficient that must be bounded grows without bound on sampled paths."""


@dataclass(frozen=True)
class AtomicJumpMeasure:
    """Finite measure ``F = sum_k weights[k] * delta_{atoms[k]}`` on R^d minus the origin."""

    atoms: tuple[tuple[float, ...], ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        atoms = tuple(tuple(float(x) for x in a) for a in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        if len(atoms) != len(weights):
            raise ScenarioError("jump measure: one weight per atom required")
        for k, (a, w) in enumerate(zip(atoms, weights)):
            if all(x == 0.0 for x in a):
                raise ScenarioError(f"jump measure: atom {k} is 0; F must not charge the origin")
            if not (w > 0 and math.isfinite(w)):
                raise ScenarioError(f"jump measure: weight of atom {k} must be positive and finite, got {w}")
        if len({len(a) for a in atoms}) > 1:
            raise ScenarioError("jump measure: atoms have inconsistent dimension")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(sum(self.weights))

    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


DRIVER_KINDS = ("zero", "affine_y", "affine_z", "affine", "saturating", "quadratic_y")


@dataclass(frozen=True)
class Driver:
    """Catalog driver ``f(t, omega, y, z) = g_t(omega) + h(y, z)``.

    ``g`` is an optional source functional.  Kinds and parameters:

    ========== ================ ===============================
    kind       params           h(y, z)
    ========== ================ ===============================
    zero       ()               0
    affine_y   (a,)             a y
    affine_z   (b_1..b_d)       b . z
    affine     (a, b_1..b_d)    a y + b . z
    saturating (m, a, b_1..b_d) m tanh((a y + b . z) / m)
    quadratic_y (a,)            a y^2   (not Lipschitz)
    ========== ================ ===============================

    ``source`` may also be any object exposing ``nodes(times, values)``; such
    drivers are built in-process only and are not serializable.
    """

    kind: str = "zero"
    params: tuple[float, ...] = ()
    source: Any = None
    lipschitz: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in DRIVER_KINDS:
            raise ScenarioError(f"driver.kind: unknown driver {self.kind!r}; expected one of {DRIVER_KINDS}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        need = {"zero": 0, "affine_y": 1, "quadratic_y": 1}
        if self.kind in need and len(self.params) != need[self.kind]:
            raise ScenarioError(f"driver.params: {self.kind} takes {need[self.kind]} parameter(s)")
        if self.kind in ("affine_z", "affine", "saturating") and len(self.params) < {"affine_z": 1, "affine": 2, "saturating": 3}[self.kind]:
            raise ScenarioError(f"driver.params: too few parameters for {self.kind}")
        if self.kind == "saturating" and not self.params[0] > 0:
            raise ScenarioError("driver.params: saturation level must be positive")

    def _ab(self) -> tuple[float, np.ndarray]:
        p = self.params
        if self.kind == "affine_y":
            return p[0], np.zeros(0)
        if self.kind == "affine_z":
            return 0.0, np.asarray(p)
        if self.kind == "affine":
            return p[0], np.asarray(p[1:])
        if self.kind == "saturating":
            return p[1], np.asarray(p[2:])
        return 0.0, np.zeros(0)

    def z_dimension(self) -> int | None:
        return len(self._ab()[1]) if self.kind in ("affine_z", "affine", "saturating") else None

    def declared_lipschitz(self) -> float:
        """Lipschitz constant ``K`` in ``|f(y',z') - f(y,z)| <= K(|y'-y| + ||z'-z||)``."""
        if self.lipschitz is not None:
            return float(self.lipschitz)
        if self.kind == "quadratic_y":
            return math.inf
        a, b = self._ab()
        return float(max(abs(a), float(np.linalg.norm(b)) if b.size else 0.0))

    def source_nodes(self, times, values) -> np.ndarray | float:
        if self.source is None:
            return 0.0
        if isinstance(self.source, FunctionalSpec):
            return evaluate_nodes(self.source, times, values)
        return self.source.nodes(times, values)

    def __call__(self, g, y, z) -> np.ndarray:
        """Evaluate with precomputed source ``g``; ``z`` has a trailing axis of length d."""
        y = np.asarray(y, dtype=float)
        if self.kind == "zero":
            return g + np.zeros_like(y)
        if self.kind == "quadratic_y":
            return g + self.params[0] * y * y
        a, b = self._ab()
        lin = a * y
        if b.size:
            lin = lin + np.asarray(z, dtype=float) @ b
        if self.kind == "saturating":
            m = self.params[0]
            return g + m * np.tanh(lin / m)
        return g + lin


@dataclass(frozen=True)
class Numerics:
    """Discretization and Monte Carlo budgets shared by the solver and verifier."""

    paths: int = 20_000
    steps: int = 100
    seed: int = 20_240_601
    picard_kmax: int = 30
    picard_tol: float = 1e-8
    basis: tuple[str, ...] = ("1", "x", "xx")
    ridge: float | None = None
    residual_paths: int | None = None
    threads: int = 1
    panel_level: float = 1.0
    z_threshold: float = 4.0
    z_rel_tol: float = 0.1
    ito_steps: tuple[int, ...] = (250, 1000, 4000)
    ito_paths: int = 2_000

    def __post_init__(self) -> None:
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(self, "ito_steps", tuple(int(s) for s in self.ito_steps))
        if self.paths < 2:
            raise ScenarioError("numerics.paths must be at least 2")
        if self.steps < 1:
            raise ScenarioError("numerics.steps must be positive")
        if self.picard_kmax < 1:
            raise ScenarioError("numerics.picard_kmax must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("numerics.seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class Oracle:
    """Optional closed-form candidate for the decoupled mild solution."""

    y: FunctionalSpec | None = None
    y_bias: float = 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    dimension: int
    horizon: float
    beta: tuple[FunctionalSpec, ...]
    sigma: tuple[tuple[FunctionalSpec, ...], ...]
    xi: FunctionalSpec
    jumps: AtomicJumpMeasure = field(default_factory=AtomicJumpMeasure)
    gamma: tuple[tuple[FunctionalSpec, ...], ...] = ()
    driver: Driver = field(default_factory=Driver)
    clock: tuple[tuple[float, float], ...] | None = None
    numerics: Numerics = field(default_factory=Numerics)
    oracle: Oracle | None = None

    def __post_init__(self) -> None:
        d = int(self.dimension)
        object.__setattr__(self, "dimension", d)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "beta", tuple(self.beta))
        object.__setattr__(self, "sigma", tuple(tuple(r) for r in self.sigma))
        object.__setattr__(self, "gamma", tuple(tuple(r) for r in self.gamma))
        if d < 1:
            raise ScenarioError("model.dimension must be positive")
        if not self.horizon > 0:
            raise ScenarioError("model.horizon must be positive")
        if len(self.beta) != d:
            raise ScenarioError(f"model.beta: expected {d} entries, got {len(self.beta)}")
        if len(self.sigma) != d or any(len(r) != d for r in self.sigma):
            raise ScenarioError(f"model.sigma: expected a {d}x{d} matrix")
        if len(self.gamma) != self.jumps.n_atoms or any(len(r) != d for r in self.gamma):
            raise ScenarioError(f"model.gamma: expected {self.jumps.n_atoms} rows of {d} functionals (one row per atom)")
        if self.jumps.n_atoms and len(self.jumps.atoms[0]) != d:
            raise ScenarioError(f"model.jump_atoms: atoms must have dimension {d}")
        for name, spec in self._named_functionals():
            if max_coordinate(spec) >= d:
                raise ScenarioError(f"{name}: references coordinate {max_coordinate(spec)} but dimension is {d}")
        zd = self.driver.z_dimension()
        if zd is not None and zd != d:
            raise ScenarioError(f"driver.params: z-coefficients must have length {d}, got {zd}")
        if self.clock is not None:
            clock = tuple((float(t), float(v)) for t, v in self.clock)
            ts = np.array([c[0] for c in clock])
            vs = np.array([c[1] for c in clock])
            if len(clock) < 2 or np.any(np.diff(ts) <= 0):
                raise ScenarioError("numerics.clock: need >= 2 rows with strictly increasing times")
            if np.any(np.diff(vs) < 0):
                raise ScenarioError("numerics.clock: V must be non-decreasing")
            if ts[0] > 0 or ts[-1] < self.horizon:
                raise ScenarioError("numerics.clock: table must cover [0, horizon]")
            object.__setattr__(self, "clock", clock)

    def _named_functionals(self):
        for i, s in enumerate(self.beta):
            yield f"model.beta[{i}]", s
        for i, row in enumerate(self.sigma):
            for j, s in enumerate(row):
                yield f"model.sigma[{i}][{j}]", s
        for k, row in enumerate(self.gamma):
            for j, s in enumerate(row):
                yield f"model.gamma[{k}][{j}]", s
        yield "terminal.xi", self.xi
        if isinstance(self.driver.source, FunctionalSpec):
            yield "driver.source", self.driver.source
        if self.oracle is not None and self.oracle.y is not None:
            yield "oracle.y", self.oracle.y

    @property
    def d(self) -> int:
        return self.dimension

    def with_(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)

    # -- coefficient evaluation on batches of paths ---------------------
    def beta_nodes(self, times, values, shift=0.0, bump=None) -> np.ndarray:
        """Drift at every node, shape (..., m, d); ``shift`` and ``bump`` as in ``evaluate_nodes``."""
        return np.stack([evaluate_nodes(s, times, values, bump, shift) for s in self.beta], axis=-1)

    def sigma_nodes(self, times, values, shift=0.0, bump=None) -> np.ndarray:
        """Diffusion matrix at every node, shape (..., m, d, d)."""
        rows = [np.stack([evaluate_nodes(s, times, values, bump, shift) for s in row], axis=-1) for row in self.sigma]
        return np.stack(rows, axis=-2)

    def gamma_nodes(self, times, values, shift=0.0, bump=None) -> np.ndarray:
        """Jump sizes ``gamma_t(omega, y_k)`` at every node, shape (..., m, K, d)."""
        batch = np.shape(values)[:-1]
        if not self.gamma:
            return np.zeros(batch + (0, self.d))
        rows = [np.stack([evaluate_nodes(s, times, values, bump, shift) for s in row], axis=-1) for row in self.gamma]
        return np.stack(rows, axis=-2)

    def clock_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.clock is None:
            return t.copy()
        ts = np.array([c[0] for c in self.clock])
        vs = np.array([c[1] for c in self.clock])
        return np.interp(t, ts, vs)


# -- TOML format ----------------------------------------------------------
_SECTIONS = {
    "model": {"dimension", "horizon", "beta", "sigma", "jump_atoms", "gamma"},
    "driver": {"kind", "params", "source", "lipschitz"},
    "terminal": {"xi"},
    "numerics": {f.name for f in fields(Numerics)} | {"clock"},
    "oracle": {"y", "y_bias"},
}


def _line_of(text: str, section: str, key: str | None) -> int | None:
    lines = text.splitlines()
    in_section = section == ""
    for n, ln in enumerate(lines, 1):
        s = ln.strip()
        if s.startswith("["):
            in_section = s == f"[{section}]"
            if in_section and key is None:
                return n
            continue
        if in_section and key is not None and re.match(rf"{re.escape(key)}\s*=", s):
            return n
    return None


def _err(text: str, section: str, key: str | None, msg: str) -> ScenarioError:
    line = _line_of(text, section, key)
    where = f"{section}.{key}" if key else section
    loc = f" (line {line})" if line else ""
    return ScenarioError(f"{where}{loc}: {msg}")


def _fn(text: str, section: str, key: str, raw) -> FunctionalSpec:
    if not isinstance(raw, str):
        raise _err(text, section, key, f"expected a functional expression string, got {raw!r}")
    try:
        return parse_functional(raw)
    except FunctionalError as exc:
        raise _err(text, section, key, str(exc)) from None


def load_scenario(text: str) -> ScenarioSpec:
    """Parse a scenario document.  Unknown keys and duplicate keys are rejected."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"syntax: {exc}") from None
    version = doc.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise _err(text, "", "schema_version", f"expected schema_version = {SCHEMA_VERSION}, got {version!r}")
    for name in doc:
        if name not in _SECTIONS:
            raise _err(text, name, None, f"unknown section; expected one of {sorted(_SECTIONS)}")
        if not isinstance(doc[name], dict):
            raise _err(text, "", name, "expected a [section] table")
        extra = set(doc[name]) - _SECTIONS[name]
        if extra:
            key = sorted(extra)[0]
            raise _err(text, name, key, f"unknown key; allowed: {sorted(_SECTIONS[name])}")
    for required in ("model", "terminal"):
        if required not in doc:
            raise ScenarioError(f"{required}: missing required section [{required}]")

    model = doc["model"]
    try:
        d = int(model["dimension"])
        horizon = float(model["horizon"])
    except KeyError as exc:
        raise _err(text, "model", None, f"missing required key {exc.args[0]!r}") from None
    beta_raw = model.get("beta", ["constant(0)"] * d)
    if "sigma" not in model:
        raise _err(text, "model", None, "missing required key 'sigma'")
    beta = tuple(_fn(text, "model", "beta", b) for b in beta_raw)
    sigma = tuple(tuple(_fn(text, "model", "sigma", s) for s in row) for row in model["sigma"])
    rows = model.get("jump_atoms", [])
    try:
        jumps = AtomicJumpMeasure(tuple(tuple(r[:-1]) for r in rows), tuple(r[-1] for r in rows))
    except ScenarioError as exc:
        raise _err(text, "model", "jump_atoms", str(exc)) from None
    gamma = tuple(tuple(_fn(text, "model", "gamma", g) for g in row) for row in model.get("gamma", []))

    drv = doc.get("driver", {})
    try:
        driver = Driver(
            kind=drv.get("kind", "zero"),
            params=tuple(drv.get("params", ())),
            source=_fn(text, "driver", "source", drv["source"]) if "source" in drv else None,
            lipschitz=drv.get("lipschitz"),
        )
    except ScenarioError as exc:
        raise _err(text, "driver", None, str(exc)) from None

    if "xi" not in doc["terminal"]:
        raise _err(text, "terminal", None, "missing required key 'xi'")
    xi = _fn(text, "terminal", "xi", doc["terminal"]["xi"])

    num = dict(doc.get("numerics", {}))
    clock = num.pop("clock", None)
    try:
        numerics = Numerics(**num)
    except (TypeError, ScenarioError) as exc:
        raise _err(text, "numerics", None, str(exc)) from None

    oracle = None
    if "oracle" in doc:
        o = doc["oracle"]
        oracle = Oracle(
            y=_fn(text, "oracle", "y", o["y"]) if "y" in o else None,
            y_bias=float(o.get("y_bias", 0.0)),
        )
    try:
        return ScenarioSpec(
            dimension=d,
            horizon=horizon,
            beta=beta,
            sigma=sigma,
            xi=xi,
            jumps=jumps,
            gamma=gamma,
            driver=driver,
            clock=None if clock is None else tuple(tuple(r) for r in clock),
            numerics=numerics,
            oracle=oracle,
        )
    except ScenarioError as exc:
        key = str(exc).split(":", 1)[0]
        section, _, k = key.partition(".")
        k = k.split("[", 1)[0] or None
        if section in _SECTIONS:
            raise _err(text, section, k, str(exc).split(":", 1)[1].strip()) from None
        raise


def load_scenario_file(path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    model: dict[str, Any] = {
        "dimension": spec.dimension,
        "horizon": spec.horizon,
        "beta": [str(b) for b in spec.beta],
        "sigma": [[str(s) for s in row] for row in spec.sigma],
    }
    if spec.jumps.n_atoms:
        model["jump_atoms"] = [[*a, w] for a, w in zip(spec.jumps.atoms, spec.jumps.weights)]
        model["gamma"] = [[str(g) for g in row] for row in spec.gamma]
    driver: dict[str, Any] = {"kind": spec.driver.kind, "params": list(spec.driver.params)}
    if spec.driver.source is not None:
        if not isinstance(spec.driver.source, FunctionalSpec):
            raise ScenarioError("driver.source: in-process sources cannot be serialized")
        driver["source"] = str(spec.driver.source)
    if spec.driver.lipschitz is not None:
        driver["lipschitz"] = spec.driver.lipschitz
    numerics = {}
    for f in fields(Numerics):
        v = getattr(spec.numerics, f.name)
        if v is not None:
            numerics[f.name] = list(v) if isinstance(v, tuple) else v
    if spec.clock is not None:
        numerics["clock"] = [list(r) for r in spec.clock]
    out = {
        "schema_version": SCHEMA_VERSION,
        "model": model,
        "driver": driver,
        "terminal": {"xi": str(spec.xi)},
        "numerics": numerics,
    }
    if spec.oracle is not None:
        o: dict[str, Any] = {"y_bias": spec.oracle.y_bias}
        if spec.oracle.y is not None:
            o["y"] = str(spec.oracle.y)
        out["oracle"] = o
    return out


def dump_scenario(spec: ScenarioSpec) -> str:
    """Canonical TOML form; ``load_scenario(dump_scenario(s)) == s``."""
    return tomli_w.dumps(scenario_to_dict(spec))


# -- validation -----------------------------------------------------------
@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        return "\n".join(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.value:.6g} {c.detail}" for c in self.checks)


def _random_paths(rng, n, m, d, horizon, scale):
    times = np.linspace(0.0, horizon, m)
    inc = rng.standard_normal((n, m, d)) * scale * np.sqrt(horizon / m)
    inc[:, 0, :] = rng.standard_normal((n, d)) * scale
    return times, np.cumsum(inc, axis=1)


def _perturbations(rng, n, m, d):
    """Unit sup-norm perturbation paths; half are constant shifts."""
    u = rng.standard_normal((n, m, d))
    u /= np.max(np.abs(u), axis=(1, 2), keepdims=True)
    half = n // 2
    u[:half] = np.sign(rng.standard_normal((half, 1, d))) * np.ones((1, m, 1))
    return u


def _coef_nodes(spec: ScenarioSpec, which: str, times, values) -> np.ndarray:
    if which == "beta":
        return spec.beta_nodes(times, values)
    if which == "sigma":
        return spec.sigma_nodes(times, values)
    return spec.gamma_nodes(times, values)


def _lipschitz_quotients(spec, which, rng, n, m, exponent):
    d = spec.d
    times, base = _random_paths(rng, n, m, d, spec.horizon, 1.0)
    u = _perturbations(rng, n, m, d)
    out = []
    for delta in (1e-1, 1e-2, 1e-3):
        c0 = _coef_nodes(spec, which, times, base)
        c1 = _coef_nodes(spec, which, times, base + delta * u)
        diff = np.sqrt(np.sum((c1 - c0).reshape(n, m, -1) ** 2, axis=-1))
        sup = np.maximum.accumulate(np.max(np.abs(delta * u), axis=-1), axis=1)
        out.append(float(np.max(diff / sup**exponent)))
    return out


def validate_scenario(spec: ScenarioSpec, n_samples: int = 256, n_times: int = 64, seed: int = 0) -> ValidationReport:
    """Sample-based well-posedness checks.

    Local Lipschitz continuity of sigma and gamma in the sup-norm (quotients reported with
    exponents 1 and 2), Lipschitz beta or uniform ellipticity, boundedness of beta, sigma,
    gamma and of the bracket densities, Lipschitz continuity of the driver and polynomial
    growth of the terminal condition.

    Raises
    ------
    UnboundedCoefficientError
        If a coefficient keeps growing with the path scale.
    """
    rng = np.random.default_rng(seed)
    d, m, n = spec.d, n_times, n_samples
    checks: list[Check] = []

    def lipschitz_check(which: str) -> Check:
        q1 = _lipschitz_quotients(spec, which, rng, n, m, 1)
        q2 = _lipschitz_quotients(spec, which, rng, n, m, 2)
        ok = q1[-1] <= 2.0 * q1[0] + 1e-9
        return Check(f"{which}_lipschitz", ok, max(q1), f"exp1 quotients {['%.3g' % q for q in q1]}; exp2 {['%.3g' % q for q in q2]}")

    sig = lipschitz_check("sigma")
    checks.append(sig)
    if spec.gamma:
        checks.append(lipschitz_check("gamma"))

    beta = lipschitz_check("beta")
    times, vals = _random_paths(rng, n, m, d, spec.horizon, 1.0)
    s = spec.sigma_nodes(times, vals)
    a = s @ np.swapaxes(s, -1, -2)
    ellipticity = float(np.min(np.linalg.eigvalsh(a)))
    # informational: ellipticity is only needed when beta is not Lipschitz
    checks.append(Check("ellipticity_constant", True, ellipticity, "min eigenvalue of sigma sigma^T"))
    checks.append(Check("beta_lipschitz_or_elliptic", beta.passed or ellipticity > 1e-12, beta.value, beta.detail))

    weights = spec.jumps.weight_array()
    unbounded = []
    for which in ("beta", "sigma", "gamma", "bracket"):
        sups = []
        for scale in (1e3, 1e6):
            t, v = _random_paths(rng, n, m, d, spec.horizon, scale)
            if which == "bracket":
                s = spec.sigma_nodes(t, v)
                g = spec.gamma_nodes(t, v)
                c = np.einsum("...ij,...ij->...i", s, s) + np.einsum("k,...ki->...i", weights, g**2)
            else:
                c = _coef_nodes(spec, which, t, v)
            sups.append(float(np.max(np.abs(c))) if c.size else 0.0)
        ok = np.isfinite(sups[1]) and sups[1] <= 1.01 * sups[0] + 1e-9
        checks.append(Check(f"{which}_bounded", bool(ok), sups[1], "sup over sampled paths"))
        if not ok:
            unbounded.append(which)

    K = spec.driver.declared_lipschitz()
    quot = []
    for scale in (1.0, 1e2, 1e4):
        y = rng.standard_normal(n) * scale
        z = rng.standard_normal((n, d)) * scale
        dy = rng.standard_normal(n) * 1e-3 * scale
        dz = rng.standard_normal((n, d)) * 1e-3 * scale
        f0 = spec.driver(0.0, y, z)
        f1 = spec.driver(0.0, y + dy, z + dz)
        quot.append(float(np.max(np.abs(f1 - f0) / (np.abs(dy) + np.linalg.norm(dz, axis=-1)))))
    ok = np.isfinite(K) and quot[-1] <= 2.0 * quot[0] + 1e-12 and max(quot) <= K * (1 + 1e-6) + 1e-12
    checks.append(Check("driver_lipschitz", bool(ok), max(quot), f"declared K = {K}"))

    c, p = growth(spec.xi, spec.horizon)
    checks.append(Check("terminal_polynomial_growth", True, c, f"p = {p}"))
    report = ValidationReport(tuple(checks))
    if unbounded:
        raise UnboundedCoefficientError(f"unbounded coefficient(s) {unbounded}:\n{report.summary()}")
    return report
