"""Dupire derivatives, the generator ``A`` and the carre du champ ``Gamma``.

For a scenario with coefficients ``(beta, sigma, gamma)`` and atomic jump
measure ``F = sum_k F_k delta_{y_k}``::

    A Phi = D Phi + beta . grad Phi + 1/2 Tr(sigma sigma^T hess Phi)
            + sum_k F_k (Phi(omega + gamma_k 1_[t, inf)) - Phi - gamma_k . grad Phi)

    Gamma(Phi, Psi) = A(Phi Psi) - Phi A Psi - Psi A Phi
    Gamma(X, Phi)   = sigma sigma^T grad Phi + sum_k F_k gamma_k (Phi(omega + gamma_k) - Phi)

Everything is computed at all nodes of a batch of paths at once (``*_nodes``
functions); the point-wise functions are thin wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .functionals import FunctionalSpec, append_node, closed_form_nodes, evaluate_nodes, is_smooth
from .paths import CadlagPath, stop
from .scenario import ScenarioSpec

__all__ = [
    "DerivativeParams",
    "Derivatives",
    "OperatorValue",
    "CalculusError",
    "derivative_nodes",
    "operator_nodes",
    "gamma_x_nodes",
    "gamma_nodes",
    "vertical_derivative",
    "vertical_hessian",
    "horizontal_derivative",
    "apply_A",
    "gamma_product_rule",
    "gamma_with_X",
    "ito_residual",
    "GeneratorSource",
    "derivative_sweep_csv",
]


class CalculusError(ArithmeticError):
    """Non-finite functional evaluation during differentiation."""


@dataclass(frozen=True)
class DerivativeParams:
    """Finite-difference settings.

    ``eps_vertical`` is relative: the bump at a node with current value ``x`` is
    ``eps_vertical * (1 + ||x||)``.  ``method='auto'`` uses closed-form derivatives
    when the functional declares them and finite differences otherwise; ``'fd'``
    forces finite differences.
    """

    eps_vertical: float = 1e-4
    eps_horizontal: float = 1e-6
    scheme: str = "central"
    method: str = "auto"

    def __post_init__(self) -> None:
        if not (self.eps_vertical > 0 and self.eps_horizontal > 0):
            raise ValueError("finite-difference steps must be positive")
        if self.scheme not in ("central", "forward"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.method not in ("auto", "fd", "exact"):
            raise ValueError(f"unknown method {self.method!r}")


class Derivatives(NamedTuple):
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    horizontal: np.ndarray


@dataclass(frozen=True)
class OperatorValue:
    horizontal: np.ndarray | float
    drift: np.ndarray | float
    diffusion: np.ndarray | float
    jump: np.ndarray | float

    @property
    def total(self):
        return self.horizontal + self.drift + self.diffusion + self.jump

    def item(self) -> "OperatorValue":
        return OperatorValue(*(float(np.asarray(p).reshape(-1)[0]) for p in (self.horizontal, self.drift, self.diffusion, self.jump)))


def _finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise CalculusError(f"non-finite value while computing {what}")
    return a


def _fd_nodes(phi, times, values, params: DerivativeParams, shift, bump) -> Derivatives:
    d = values.shape[-1]
    base = np.zeros(values.shape) if bump is None else np.broadcast_to(bump, values.shape).astype(float)
    cur = values + base
    eps = params.eps_vertical * (1.0 + np.linalg.norm(cur, axis=-1))

    def f(extra):
        return evaluate_nodes(phi, times, values, bump=base + extra, shift=shift)

    v = f(0.0)
    e = [np.zeros(values.shape) for _ in range(d)]
    for i in range(d):
        e[i][..., i] = eps
    grad = np.empty(values.shape)
    hess = np.empty(values.shape + (d,))
    plus = [f(e[i]) for i in range(d)]
    minus = [f(-e[i]) for i in range(d)]
    for i in range(d):
        if params.scheme == "central":
            grad[..., i] = (plus[i] - minus[i]) / (2 * eps)
        else:
            grad[..., i] = (plus[i] - v) / eps
        hess[..., i, i] = (plus[i] - 2 * v + minus[i]) / eps**2
        for j in range(i):
            hij = (f(e[i] + e[j]) - f(e[i] - e[j]) - f(-e[i] + e[j]) + f(-e[i] - e[j])) / (4 * eps**2)
            hess[..., i, j] = hess[..., j, i] = hij
    h = params.eps_horizontal
    horiz = (evaluate_nodes(phi, times, values, bump=base, shift=shift + h) - v) / h
    return Derivatives(v, grad, hess, horiz)


def derivative_nodes(phi: FunctionalSpec, times, values, params: DerivativeParams | None = None, shift=0.0, bump=None) -> Derivatives:
    """Value, vertical gradient, vertical Hessian and horizontal derivative at every node.

    ``shift`` and ``bump`` move the evaluation point as in :func:`evaluate_nodes`.
    Beyond the horizon the catalog expressions are continued analytically, so the
    horizontal derivative at ``T`` is the limit from the left.
    """
    params = params or DerivativeParams()
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    shift = np.asarray(shift, dtype=float)
    if params.method != "fd" and is_smooth(phi):
        out = Derivatives(*closed_form_nodes(phi, times, values, shift, bump))
    elif params.method == "exact":
        raise CalculusError(f"{phi} declares no closed-form derivatives")
    else:
        out = _fd_nodes(phi, times, values, params, shift, bump)
    for name, a in out._asdict().items():
        _finite(a, f"{name} of {phi}")
    return out


def _coefficients(spec: ScenarioSpec, times, values, shift, bump=None):
    beta = spec.beta_nodes(times, values, shift, bump)
    sigma = spec.sigma_nodes(times, values, shift, bump)
    gamma = spec.gamma_nodes(times, values, shift, bump)
    return beta, sigma, gamma


def _jump_values(phi, spec, times, values, gamma, shift, bump=None):
    """``Phi(omega + gamma_k 1_[t, inf))`` for each atom, shape (..., m, K)."""
    base = 0.0 if bump is None else bump
    cols = [evaluate_nodes(phi, times, values, bump=base + gamma[..., k, :], shift=shift) for k in range(gamma.shape[-2])]
    if not cols:
        return np.zeros(values.shape[:-1] + (0,))
    return np.stack(cols, axis=-1)


def operator_nodes(
    phi: FunctionalSpec, spec: ScenarioSpec, times, values, params: DerivativeParams | None = None, shift=0.0, bump=None
) -> OperatorValue:
    """``A Phi`` split into its four parts at every node."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    der = derivative_nodes(phi, times, values, params, shift, bump)
    beta, sigma, gamma = _coefficients(spec, times, values, shift, bump)
    a = sigma @ np.swapaxes(sigma, -1, -2)
    drift = np.einsum("...i,...i->...", beta, der.grad)
    diffusion = 0.5 * np.einsum("...ij,...ij->...", a, der.hess)
    w = spec.jumps.weight_array()
    if w.size:
        jv = _jump_values(phi, spec, times, values, gamma, shift, bump)
        lin = np.einsum("...ki,...i->...k", gamma, der.grad)
        jump = np.einsum("...k,k->...", jv - der.value[..., None] - lin, w)
    else:
        jump = np.zeros_like(der.value)
    return OperatorValue(der.horizontal, drift, diffusion, _finite(jump, "jump term"))


def gamma_x_nodes(
    phi: FunctionalSpec, spec: ScenarioSpec, times, values, params: DerivativeParams | None = None, shift=0.0, bump=None
) -> np.ndarray:
    """``Gamma(X, Phi)`` at every node, shape (..., m, d)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    der = derivative_nodes(phi, times, values, params, shift, bump)
    _, sigma, gamma = _coefficients(spec, times, values, shift, bump)
    a = sigma @ np.swapaxes(sigma, -1, -2)
    out = np.einsum("...ij,...j->...i", a, der.grad)
    w = spec.jumps.weight_array()
    if w.size:
        jv = _jump_values(phi, spec, times, values, gamma, shift, bump)
        out = out + np.einsum("k,...ki,...k->...i", w, gamma, jv - der.value[..., None])
    return out


def gamma_nodes(
    phi: FunctionalSpec, psi: FunctionalSpec, spec: ScenarioSpec, times, values, params: DerivativeParams | None = None, shift=0.0, bump=None
) -> np.ndarray:
    """``A(Phi Psi) - Phi A Psi - Psi A Phi`` at every node."""
    a_prod = operator_nodes(phi * psi, spec, times, values, params, shift, bump).total
    a_phi = operator_nodes(phi, spec, times, values, params, shift, bump).total
    a_psi = operator_nodes(psi, spec, times, values, params, shift, bump).total
    v_phi = evaluate_nodes(phi, times, values, bump=bump, shift=shift)
    v_psi = evaluate_nodes(psi, times, values, bump=bump, shift=shift)
    return a_prod - v_phi * a_psi - v_psi * a_phi


# -- point-wise wrappers --------------------------------------------------
def _point(path: CadlagPath, t: float):
    if t < 0:
        raise ValueError("t must be non-negative")
    p = stop(path, min(t, path.horizon))
    times, values = append_node(p.times, p.values, t)
    return times, values, 0.0


def vertical_derivative(phi: FunctionalSpec, t: float, path: CadlagPath, params: DerivativeParams | None = None) -> np.ndarray:
    times, values, shift = _point(path, t)
    return derivative_nodes(phi, times, values, params, shift).grad[-1]


def vertical_hessian(phi: FunctionalSpec, t: float, path: CadlagPath, params: DerivativeParams | None = None) -> np.ndarray:
    times, values, shift = _point(path, t)
    h = derivative_nodes(phi, times, values, params, shift).hess[-1]
    return 0.5 * (h + h.T)


def horizontal_derivative(phi: FunctionalSpec, t: float, path: CadlagPath, params: DerivativeParams | None = None) -> float:
    times, values, shift = _point(path, t)
    return float(derivative_nodes(phi, times, values, params, shift).horizontal[-1])


def apply_A(phi: FunctionalSpec, spec: ScenarioSpec, t: float, path: CadlagPath, params: DerivativeParams | None = None) -> OperatorValue:
    times, values, shift = _point(path, t)
    op = operator_nodes(phi, spec, times, values, params, shift)
    return OperatorValue(*(float(np.asarray(x)[-1]) for x in (op.horizontal, op.drift, op.diffusion, op.jump)))


def gamma_product_rule(phi, psi, spec: ScenarioSpec, t: float, path: CadlagPath, params: DerivativeParams | None = None) -> float:
    times, values, shift = _point(path, t)
    return float(gamma_nodes(phi, psi, spec, times, values, params, shift)[-1])


def gamma_with_X(phi, spec: ScenarioSpec, t: float, path: CadlagPath, params: DerivativeParams | None = None) -> np.ndarray:
    times, values, shift = _point(path, t)
    return gamma_x_nodes(phi, spec, times, values, params, shift)[-1]


class GeneratorSource:
    """Source term ``-A Phi`` usable as a driver source (``f = -A Phi`` makes ``Phi`` classical)."""

    def __init__(self, phi: FunctionalSpec, spec: ScenarioSpec, params: DerivativeParams | None = None):
        self.phi, self.spec, self.params = phi, spec, params

    def nodes(self, times, values) -> np.ndarray:
        return -operator_nodes(self.phi, self.spec, times, values, self.params).total


# -- Ito formula residual ---------------------------------------------------
def ito_residual(phi: FunctionalSpec, spec: ScenarioSpec, ens, params: DerivativeParams | None = None) -> np.ndarray:
    """Per-path ``Phi_T`` minus the discretized right-hand side of the functional Ito formula.

    ``dX`` is ``dM + beta dt``, ``d<X^c>`` is ``sigma sigma^T dt`` and each arrival step
    contributes ``Phi(omega) - Phi(omega^-) - grad Phi(omega^-) . Delta X`` evaluated at the
    node after the jump, where ``omega^-`` removes the jump ``J`` at that node.
    """
    if getattr(ens, "arrivals", None) is None or getattr(ens, "J", None) is None:
        raise ValueError("ensemble carries no jump bookkeeping")
    times, values = ens.full_times(), ens.full_values()
    off = ens.offset
    dt = ens.grid.dt
    der = derivative_nodes(phi, times, values, params)
    sigma = spec.sigma_nodes(times, values)[:, off:-1]
    beta = spec.beta_nodes(times, values)[:, off:-1]
    a = sigma @ np.swapaxes(sigma, -1, -2)
    v = der.value[:, off:]
    g = der.grad[:, off:-1]
    hsn = der.hess[:, off:-1]
    dx = ens.dM + beta * dt[None, :, None]
    rhs = v[:, 0] + np.einsum("pk,k->p", der.horizontal[:, off:-1], dt)
    rhs = rhs + np.einsum("pki,pki->p", g, dx)
    rhs = rhs + 0.5 * np.einsum("pkij,pkij,k->p", hsn, a, dt)
    flags = ens.arrivals.sum(axis=-1) > 0
    if np.any(flags):
        bump = np.zeros(values.shape)
        bump[:, off + 1 :] = -ens.J
        pre = derivative_nodes(phi, times, values, params, bump=bump)
        corr = v[:, 1:] - pre.value[:, off + 1 :] - np.einsum("pki,pki->pk", pre.grad[:, off + 1 :], ens.J)
        rhs = rhs + np.sum(np.where(flags, corr, 0.0), axis=1)
    return v[:, -1] - rhs


def derivative_sweep_csv(phi: FunctionalSpec, spec: ScenarioSpec, path: CadlagPath, params: DerivativeParams | None = None) -> str:
    """CSV of ``t, value, horizontal, drift, diffusion, jump, total`` at the grid times of ``path``."""
    op = operator_nodes(phi, spec, path.times, path.values, params)
    v = evaluate_nodes(phi, path.times, path.values)
    lines = ["t,value,horizontal,drift,diffusion,jump,total"]
    for j, t in enumerate(path.times):
        parts = [op.horizontal[j], op.drift[j], op.diffusion[j], op.jump[j], op.total[j]]
        lines.append(",".join(repr(float(x)) for x in [t, v[j], *parts]))
    return "\n".join(lines) + "\n"
