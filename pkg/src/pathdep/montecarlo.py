"""Monte Carlo estimators for the projectors ``P_s[.](eta) = E^{s,eta}[.]``.

Also evaluates the residuals of the d + 1 mild equations for a candidate pair
``(Y, Z)``::

    Y_s(eta)          = P_s[xi] + int_s^T P_s[f(r, ., Y_r, Z_r)] dV_r
    Y_s(eta) eta_i(s) = P_s[xi X^i_T] - int_s^T P_s[Z^i_r + Y_r beta^i_r - X^i_r f(r, ., Y_r, Z_r)] dV_r

Candidates are *fields*: objects with a method ``on(ens)`` returning their values
at every grid node of an ensemble.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .calculus import DerivativeParams, gamma_x_nodes
from .functionals import FunctionalSpec
from .paths import PointedPath
from .rng import substream_seed
from .scenario import ScenarioSpec
from .simulator import Ensemble, TimeGrid, resimulate_nodes, simulate

__all__ = [
    "Estimate",
    "FunctionalField",
    "GammaXField",
    "ConstantField",
    "BiasedField",
    "estimate_Ps",
    "estimate_time_integral",
    "nested_estimate",
    "nested_split",
    "trapezoid_weights",
    "MildResidual",
    "MildReport",
    "mild_residuals",
    "mild_residuals_on",
    "z_score",
]


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("an estimate needs at least two samples")

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float).ravel()
        if x.size < 2:
            raise ValueError("an estimate needs at least two samples")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size))

    def z(self, value: float) -> float:
        return z_score(self.mean - value, self.stderr, value)

    def within(self, value: float, k: float = 4.0) -> bool:
        return abs(self.z(value)) <= k


def z_score(diff: float, stderr: float, scale: float = 1.0) -> float:
    """``diff / stderr``; a zero stderr gives 0 for a round-off sized difference and inf otherwise."""
    if stderr > 0:
        return float(diff / stderr)
    return 0.0 if abs(diff) <= 1e-10 * max(1.0, abs(scale)) else math.copysign(math.inf, diff)


# -- fields ---------------------------------------------------------------
class FunctionalField:
    """A catalog functional evaluated at the grid nodes."""

    def __init__(self, spec: FunctionalSpec | tuple[FunctionalSpec, ...]):
        self.spec = spec

    def on(self, ens: Ensemble) -> np.ndarray:
        if isinstance(self.spec, FunctionalSpec):
            return ens.node_values(self.spec)
        return np.stack([ens.node_values(s) for s in self.spec], axis=-1)

    def __repr__(self) -> str:
        return f"FunctionalField({self.spec})"


class GammaXField:
    """``Gamma(Phi, X)`` at the grid nodes, shape (n_paths, n + 1, d).

    With ``pre_step=True`` node ``k < n`` reports the value at ``t_{k+1}`` on the path
    held flat over ``[t_k, t_{k+1}]``, which is the bracket density seen by the
    step ``[t_k, t_{k+1}]`` of the Euler scheme.
    """

    def __init__(self, phi: FunctionalSpec, scenario: ScenarioSpec, params: DerivativeParams | None = None, pre_step: bool = False):
        self.phi, self.scenario, self.params, self.pre_step = phi, scenario, params, pre_step

    def on(self, ens: Ensemble) -> np.ndarray:
        times, values = ens.full_times(), ens.full_values()
        off = ens.offset
        if not self.pre_step:
            return gamma_x_nodes(self.phi, self.scenario, times, values, self.params)[:, off:]
        bump = np.zeros(values.shape)
        bump[:, off + 1 :] = ens.X[:, :-1] - ens.X[:, 1:]
        g = gamma_x_nodes(self.phi, self.scenario, times, values, self.params, bump=bump)[:, off:]
        return np.concatenate([g[:, 1:], g[:, -1:]], axis=1)


class ConstantField:
    def __init__(self, value, shape: tuple[int, ...] = ()):
        self.value, self.shape = value, shape

    def on(self, ens: Ensemble) -> np.ndarray:
        return np.full((ens.n_paths, ens.steps + 1) + self.shape, self.value, dtype=float)


class BiasedField:
    """``field + bias``; used for negative controls."""

    def __init__(self, field, bias: float):
        self.field, self.bias = field, bias

    def on(self, ens: Ensemble) -> np.ndarray:
        return self.field.on(ens) + self.bias


# -- estimators -------------------------------------------------------------
def trapezoid_weights(v: np.ndarray) -> np.ndarray:
    """Weights ``w`` with ``sum_k w_k g(t_k)`` the trapezoid rule against ``dV`` on the nodes."""
    dv = np.diff(v)
    w = np.zeros(v.size)
    w[:-1] += 0.5 * dv
    w[1:] += 0.5 * dv
    return w


def estimate_Ps(
    spec: ScenarioSpec,
    target: FunctionalSpec,
    start: PointedPath,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    r: float | None = None,
    threads: int | None = None,
) -> Estimate:
    """Plain Monte Carlo mean of ``target`` at ``T`` (or at the grid node ``r``)."""
    ens = simulate(spec, start, grid, n_paths, seed, threads)
    k = grid.steps if r is None else grid.index_of(r)
    return Estimate.from_samples(ens.node_values(target)[:, k])


def estimate_time_integral(
    spec: ScenarioSpec,
    integrand: FunctionalSpec | Callable[[Ensemble], np.ndarray],
    start: PointedPath,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    threads: int | None = None,
) -> Estimate:
    """``int_s^T P_s[integrand_r] dV_r`` by per-path trapezoid quadrature.

    ``integrand`` is a functional or a callable mapping an ensemble to node values
    of shape (n_paths, n + 1).
    """
    ens = simulate(spec, start, grid, n_paths, seed, threads)
    vals = ens.node_values(integrand) if isinstance(integrand, FunctionalSpec) else np.asarray(integrand(ens))
    w = trapezoid_weights(spec.clock_at(grid.nodes))
    return Estimate.from_samples(vals @ w)


def nested_split(budget: int) -> tuple[int, int]:
    """Outer and inner sample sizes ``(n^(2/3), n^(1/3))`` for a total budget ``n``."""
    n_outer = max(2, int(round(budget ** (2.0 / 3.0))))
    n_inner = max(1, int(round(budget ** (1.0 / 3.0))))
    return n_outer, n_inner


def nested_estimate(
    spec: ScenarioSpec,
    target: FunctionalSpec,
    start: PointedPath,
    grid: TimeGrid,
    t: float,
    budget: int,
    seed: int,
    split: tuple[int, int] | None = None,
    threads: int | None = None,
) -> Estimate:
    """Two-level estimate of ``E^{s,eta}[ E^{t,omega}[target_T] ]`` restarting at node ``t``."""
    n_outer, n_inner = split or nested_split(budget)
    k = grid.index_of(t)
    outer = simulate(spec, start, grid, n_outer, seed, threads)
    if k == grid.steps:
        return Estimate.from_samples(outer.node_values(target)[:, -1])
    inner = resimulate_nodes(spec, outer, k, n_inner, substream_seed(seed, 1, k), threads=threads)
    vals = inner.node_values(target)[:, -1].reshape(n_outer, n_inner)
    return Estimate.from_samples(vals.mean(axis=1))


# -- mild residuals ---------------------------------------------------------
@dataclass(frozen=True)
class MildResidual:
    equation_index: int
    residual: float
    stderr: float
    z_score: float

    def passed(self, threshold: float = 4.0) -> bool:
        return abs(self.z_score) <= threshold


@dataclass(frozen=True)
class MildReport:
    residuals: tuple[MildResidual, ...]
    Y_s: float
    seed: int
    n_paths: int
    steps: int

    def passed(self, threshold: float = 4.0) -> bool:
        return all(r.passed(threshold) for r in self.residuals)

    def max_abs_z(self) -> float:
        return max(abs(r.z_score) for r in self.residuals)

    def to_dict(self) -> dict:
        return {
            "residuals": [r.__dict__ for r in self.residuals],
            "Y_s": self.Y_s,
            "metadata": {"seed": self.seed, "n_paths": self.n_paths, "steps": self.steps},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def mild_residuals_on(spec: ScenarioSpec, Y, Z, ens: Ensemble) -> MildReport:
    """Residuals of the d + 1 mild equations for fields ``Y`` and ``Z`` on a given ensemble."""
    n = ens.n_paths
    y = np.asarray(Y.on(ens), dtype=float)
    z = np.asarray(Z.on(ens), dtype=float)
    if z.ndim == 2:
        z = z[..., None]
    times, values = ens.full_times(), ens.full_values()
    off = ens.offset
    g = spec.driver.source_nodes(times, values)
    g = g[:, off:] if np.ndim(g) else g
    f = spec.driver(g, y, z)
    beta = spec.beta_nodes(times, values)[:, off:]
    xi = ens.node_values(spec.xi)[:, -1]
    w = trapezoid_weights(spec.clock_at(ens.grid.nodes))
    y_s = float(np.mean(y[:, 0]))
    x_s = ens.X[0, 0]
    samples = [xi + f @ w]
    lhs = [y_s]
    for i in range(spec.d):
        integrand = z[..., i] + y * beta[..., i] - ens.X[..., i] * f
        samples.append(xi * ens.X[:, -1, i] - integrand @ w)
        lhs.append(y_s * x_s[i])
    out = []
    for idx, (l, smp) in enumerate(zip(lhs, samples)):
        est = Estimate.from_samples(smp)
        res = l - est.mean
        out.append(MildResidual(idx, float(res), est.stderr, z_score(res, est.stderr, max(abs(l), abs(est.mean)))))
    return MildReport(tuple(out), y_s, ens.seed, n, ens.steps)


def mild_residuals(
    spec: ScenarioSpec,
    Y,
    Z,
    start: PointedPath,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    threads: int | None = None,
) -> MildReport:
    """Simulate a fresh ensemble from ``start`` and evaluate :func:`mild_residuals_on`."""
    if isinstance(Y, FunctionalSpec):
        Y = FunctionalField(Y)
    if isinstance(Z, (FunctionalSpec, tuple)):
        Z = FunctionalField(Z)
    ens = simulate(spec, start, grid, n_paths, seed, threads)
    return mild_residuals_on(spec, Y, Z, ens)
