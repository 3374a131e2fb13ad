"""Global Picard iteration with least-squares regression for BSDEs driven by ``M[X]``.

For ``Y = xi + int f(r, ., Y, Z) dV - (M_T - M)`` with ``Z = d<M, M[X]>/dV``, one
forward ensemble is simulated and each Picard step computes, node by node::

    Y^k_{t_j} = E[ xi + sum_{i >= j} trap(f(Y^{k-1}, Z^{k-1})) dV | F_{t_j} ]
    Z^k_{t_j} = E[ (Y^k_{t_{j+1}} - Y^k_{t_j} + trap(f) dV_j) dM_j | F_{t_j} ] / dV_j

where ``E[. | F_t]`` is a ridge-regularized least-squares projection on path
features at ``t`` and ``trap`` is the trapezoid rule on the step.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .functionals import evaluate_functional
from .montecarlo import z_score
from .paths import CadlagPath, PointedPath, constant_path
from .scenario import ScenarioSpec
from .simulator import Ensemble, TimeGrid, simulate

__all__ = [
    "FEATURES",
    "RegressionBasis",
    "RegressionError",
    "PicardDivergence",
    "PicardSettings",
    "BsdeGridSolution",
    "PicardDiagnostics",
    "RegressionField",
    "solve_bsde",
    "picard_diagnostics",
    "martingale_test",
    "bracket_consistency",
    "evaluate_Y_field",
    "default_panel",
    "export_solution",
    "load_solution",
]

FEATURES = ("1", "x", "xx", "int", "max", "t", "tt")


class RegressionError(np.linalg.LinAlgError):
    """Singular design matrix without ridge."""


class PicardDivergence(RuntimeError):
    """Picard deltas increased for three consecutive iterations."""

    def __init__(self, message: str, deltas: tuple[float, ...]):
        super().__init__(message)
        self.deltas = deltas


@dataclass(frozen=True)
class RegressionBasis:
    """Feature groups for the conditional-expectation regressions.

    ``1`` intercept, ``x`` current values, ``xx`` pairwise products ``x_i x_j`` (i <= j),
    ``int`` running integrals, ``max`` running maxima, ``t``/``tt`` time powers.
    Columns that are constant across paths (time powers, any feature at the start
    node) are absorbed by the intercept.  ``ridge=None`` means ``1e-8 * n_paths``.
    """

    features: tuple[str, ...] = ("1", "x", "xx")
    ridge: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        bad = [f for f in self.features if f not in FEATURES]
        if bad:
            raise ValueError(f"unknown basis features {bad}; expected a subset of {FEATURES}")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be non-negative")

    def ridge_for(self, n_paths: int) -> float:
        return 1e-8 * n_paths if self.ridge is None else float(self.ridge)

    def names(self, d: int) -> list[str]:
        out = []
        for f in self.features:
            if f in ("x", "int", "max"):
                out += [f"{f}_{i}" for i in range(d)]
            elif f == "xx":
                out += [f"x_{i}*x_{j}" for i in range(d) for j in range(i, d)]
            elif f != "1":
                out.append(f)
        return out


class _FeatureSource:
    """Node-wise features of an ensemble (history features precomputed)."""

    def __init__(self, basis: RegressionBasis, ens: Ensemble):
        self.basis, self.ens = basis, ens
        times, values = ens.full_times(), ens.full_values()
        off = ens.offset
        self.running_int = self.running_max = None
        if "int" in basis.features:
            dt = np.diff(times)
            cum = np.concatenate([np.zeros(values.shape[:1] + (1,) + values.shape[2:]), np.cumsum(values[:, :-1] * dt[None, :, None], axis=1)], axis=1)
            self.running_int = cum[:, off:]
        if "max" in basis.features:
            self.running_max = np.maximum.accumulate(values, axis=1)[:, off:]

    def at(self, k: int) -> np.ndarray:
        x = self.ens.X[:, k]
        n, d = x.shape
        t = self.ens.grid.nodes[k]
        cols = []
        for f in self.basis.features:
            if f == "x":
                cols.append(x)
            elif f == "xx":
                iu = np.triu_indices(d)
                cols.append((x[:, :, None] * x[:, None, :])[:, iu[0], iu[1]])
            elif f == "int":
                cols.append(self.running_int[:, k])
            elif f == "max":
                cols.append(self.running_max[:, k])
            elif f == "t":
                cols.append(np.full((n, 1), t))
            elif f == "tt":
                cols.append(np.full((n, 1), t * t))
        return np.concatenate(cols, axis=1) if cols else np.zeros((n, 0))


@dataclass(frozen=True)
class _Projection:
    """Standardized least-squares projector for one node."""

    mean: np.ndarray
    scale: np.ndarray
    keep: np.ndarray
    chol: tuple | None
    n: int

    @classmethod
    def build(cls, F: np.ndarray, ridge: float, names: list[str], node: int) -> "_Projection":
        n = F.shape[0]
        mean = F.mean(axis=0)
        scale = F.std(axis=0)
        keep = scale > 1e-10 * np.maximum(1.0, np.abs(mean))
        if not keep.any():
            return cls(mean, scale, keep, None, n)
        Fs = (F[:, keep] - mean[keep]) / scale[keep]
        G = Fs.T @ Fs + ridge * np.eye(int(keep.sum()))
        try:
            chol = linalg.cho_factor(G)
            if ridge == 0 and np.linalg.cond(G) > 1e12:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            kept = [nm for nm, kp in zip(names, keep) if kp]
            sv = np.linalg.svd(Fs, compute_uv=False)
            raise RegressionError(
                f"rank-deficient regression at node {node}: features {kept}, singular values {np.round(sv, 6).tolist()}; "
                "use a positive ridge or drop collinear features"
            ) from None
        return cls(mean, scale, keep, chol, n)

    def standardize(self, F: np.ndarray) -> np.ndarray:
        return (F[:, self.keep] - self.mean[self.keep]) / self.scale[self.keep]

    def fit(self, F: np.ndarray, target: np.ndarray):
        """Intercept and slope coefficients for ``target`` (shape (n,) or (n, q))."""
        c0 = target.mean(axis=0)
        if self.chol is None:
            return c0, np.zeros((0,) + target.shape[1:])
        Fs = self.standardize(F)
        beta = linalg.cho_solve(self.chol, Fs.T @ (target - c0))
        return c0, beta

    def predict(self, F: np.ndarray, coef) -> np.ndarray:
        c0, beta = coef
        if self.chol is None:
            return np.broadcast_to(c0, (F.shape[0],) + np.shape(c0)).copy()
        return c0 + self.standardize(F) @ beta


@dataclass(frozen=True)
class PicardSettings:
    k_max: int = 30
    tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("picard k_max must be at least 1")
        if not self.tol >= 0:
            raise ValueError("picard tol must be non-negative")


@dataclass(frozen=True, eq=False)
class BsdeGridSolution:
    """Discrete solution on (grid nodes x paths).

    ``Y`` has shape (n_paths, n + 1) with ``Y[:, n] = xi``; ``Z`` has shape
    (n_paths, n, d) at nodes ``t_0 .. t_{n-1}``.
    """

    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    deltas: tuple[float, ...]
    Y_s: float
    Y_s_stderr: float
    converged: bool = True
    path_ids: np.ndarray | None = None
    seed: int = 0
    basis: RegressionBasis = field(default_factory=RegressionBasis)
    r2: np.ndarray | None = None
    ensemble: Ensemble | None = None
    projections: tuple | None = None
    y_coef: tuple | None = None
    z_coef: tuple | None = None
    f_values: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return len(self.deltas)

    def summary(self) -> dict:
        return {
            "Y_s": self.Y_s,
            "stderr": self.Y_s_stderr,
            "iterations": self.iterations,
            "deltas": list(self.deltas),
            "converged": self.converged,
        }


# -- solver -----------------------------------------------------------------
def _driver_values(spec: ScenarioSpec, g, Y, Zn):
    return spec.driver(g, Y, Zn)


def _extend_z(Z: np.ndarray) -> np.ndarray:
    """Node values for ``Z`` including ``t_n`` (held from ``t_{n-1}``)."""
    return np.concatenate([Z, Z[:, -1:]], axis=1)


def _source_values(spec: ScenarioSpec, ens: Ensemble):
    g = spec.driver.source_nodes(ens.full_times(), ens.full_values())
    return g[:, ens.offset :] if np.ndim(g) else g


def solve_bsde(
    spec: ScenarioSpec,
    start: PointedPath,
    grid: TimeGrid,
    basis: RegressionBasis | None = None,
    n_paths: int = 10_000,
    picard: PicardSettings | None = None,
    seed: int = 0,
    threads: int | None = None,
    ensemble: Ensemble | None = None,
    keep_ensemble: bool = True,
) -> BsdeGridSolution:
    """Solve ``BSDE^{s,eta}(f, xi)`` on ``grid`` by global Picard iteration.

    Raises
    ------
    RegressionError
        Singular design without ridge.
    PicardDivergence
        Deltas increased three times in a row.
    """
    basis = basis or RegressionBasis()
    picard = picard or PicardSettings()
    ens = ensemble if ensemble is not None else simulate(spec, start, grid, n_paths, seed, threads)
    grid = ens.grid
    n, N, d = grid.steps, ens.n_paths, ens.d
    v = spec.clock_at(grid.nodes)
    dv = np.diff(v)
    if np.any(dv <= 0):
        raise ValueError("the clock must increase strictly on every grid step")
    names = basis.names(d)
    src = _FeatureSource(basis, ens)
    ridge = basis.ridge_for(N)
    proj = [_Projection.build(src.at(k), ridge, names, k) for k in range(n)]
    xi = ens.node_values(spec.xi)[:, -1]
    g = _source_values(spec, ens)

    Y = np.zeros((N, n + 1))
    Z = np.zeros((N, n, d))
    deltas: list[float] = []
    increases = 0
    converged = False
    r2 = np.zeros(n)
    y_coef: list = [None] * n
    z_coef: list = [None] * n
    for _ in range(picard.k_max):
        f = _driver_values(spec, g, Y, _extend_z(Z))
        trap = 0.5 * (f[:, :-1] + f[:, 1:]) * dv
        tail = np.cumsum(trap[:, ::-1], axis=1)[:, ::-1]
        Yn = np.empty_like(Y)
        Yn[:, n] = xi
        Zn = np.empty_like(Z)
        for k in range(n - 1, -1, -1):
            F = src.at(k)
            target = xi + tail[:, k]
            y_coef[k] = proj[k].fit(F, target)
            Yn[:, k] = proj[k].predict(F, y_coef[k])
            var = target.var()
            r2[k] = 1.0 - np.mean((target - Yn[:, k]) ** 2) / var if var > 0 else 1.0
            inc = Yn[:, k + 1] - Yn[:, k] + trap[:, k]
            z_coef[k] = proj[k].fit(F, inc[:, None] * ens.dM[:, k] / dv[k])
            Zn[:, k] = proj[k].predict(F, z_coef[k])
        delta = math.sqrt(float(np.sum(dv * (np.mean((Yn[:, :-1] - Y[:, :-1]) ** 2, axis=0) + np.mean(np.sum((Zn - Z) ** 2, axis=2), axis=0)))))
        if not math.isfinite(delta):
            raise PicardDivergence(f"non-finite Picard delta after {len(deltas)} iterations", tuple(deltas) + (delta,))
        if deltas and delta > deltas[-1]:
            increases += 1
        else:
            increases = 0
        deltas.append(delta)
        Y, Z = Yn, Zn
        if increases >= 3:
            raise PicardDivergence(f"Picard deltas increased 3 times in a row: {deltas}", tuple(deltas))
        if delta <= picard.tol:
            converged = True
            break
    f = _driver_values(spec, g, Y, _extend_z(Z))
    target0 = xi + np.sum(0.5 * (f[:, :-1] + f[:, 1:]) * dv, axis=1)
    stderr = float(target0.std(ddof=1) / math.sqrt(N)) if N > 1 else math.nan
    return BsdeGridSolution(
        grid=grid,
        Y=Y,
        Z=Z,
        deltas=tuple(deltas),
        Y_s=float(Y[0, 0]),
        Y_s_stderr=stderr,
        converged=converged,
        path_ids=np.asarray(ens.path_ids),
        seed=ens.seed,
        basis=basis,
        r2=r2,
        ensemble=ens if keep_ensemble else None,
        projections=tuple(proj),
        y_coef=tuple(y_coef),
        z_coef=tuple(z_coef),
        f_values=f,
    )


class RegressionField:
    """The fitted conditional expectations of a solution, re-evaluated on another ensemble.

    The ensemble must share the solution's grid nodes.  ``Y`` at ``T`` is ``xi``;
    ``Z`` at ``T`` is held from the last interior node.
    """

    def __init__(self, sol: BsdeGridSolution, spec: ScenarioSpec, which: str = "Y"):
        if sol.projections is None:
            raise ValueError("solution carries no regression coefficients")
        if which not in ("Y", "Z"):
            raise ValueError("which must be 'Y' or 'Z'")
        self.sol, self.spec, self.which = sol, spec, which

    def on(self, ens: Ensemble) -> np.ndarray:
        sol = self.sol
        if not np.allclose(ens.grid.nodes, sol.grid.nodes, rtol=0, atol=1e-12):
            raise ValueError("ensemble grid differs from the solution grid")
        src = _FeatureSource(sol.basis, ens)
        n = sol.grid.steps
        if self.which == "Y":
            out = np.empty((ens.n_paths, n + 1))
            out[:, n] = ens.node_values(self.spec.xi)[:, -1]
            for k in range(n):
                out[:, k] = sol.projections[k].predict(src.at(k), sol.y_coef[k])
            return out
        out = np.empty((ens.n_paths, n, ens.d))
        for k in range(n):
            out[:, k] = sol.projections[k].predict(src.at(k), sol.z_coef[k])
        return _extend_z(out)


# -- diagnostics ------------------------------------------------------------
@dataclass(frozen=True)
class PicardDiagnostics:
    deltas: tuple[float, ...]
    ratio: float
    strictly_decreasing: bool
    contracting: bool
    message: str


def picard_diagnostics(sol: BsdeGridSolution, tol: float = 0.0) -> PicardDiagnostics:
    """Per-iteration deltas, a geometric-fit contraction ratio and monotonicity flags."""
    d = np.asarray(sol.deltas, dtype=float)
    if d.size < 2:
        return PicardDiagnostics(tuple(d), math.nan, False, False, "insufficient iterations")
    above = d[d > max(tol, 0.0)]
    strictly = bool(np.all(np.diff(above) < 0)) and bool(np.all(d[1:] <= d[:-1]))
    pos = d[d > 0]
    if pos.size >= 2:
        slope = np.polyfit(np.arange(pos.size), np.log(pos), 1)[0]
        ratio = float(math.exp(slope))
    else:
        ratio = 0.0
    contracting = strictly and ratio < 1.0
    msg = "contracting" if contracting else "non-contraction detected"
    return PicardDiagnostics(tuple(d.tolist()), ratio, strictly, contracting, msg)


def martingale_test(sol: BsdeGridSolution) -> float:
    """Largest |z| of the regression coefficients of ``dY + f dV`` on the features at each node.

    The coefficients equal (minus) those of the next node's regression residual
    ``eps_{k+1} = xi + I_{k+1} - Y_{k+1}`` on the features at ``t_k``; they vanish when
    ``M`` is a martingale and the basis is adequate.  Standard errors come from the
    variance of ``eps_{k+1}``, floored at the scale of the ridge bias.
    """
    if sol.ensemble is None or sol.projections is None or sol.f_values is None:
        raise ValueError("martingale test needs the solution's ensemble")
    ens, f = sol.ensemble, sol.f_values
    dv = np.diff(sol.grid.nodes)
    trap = 0.5 * (f[:, :-1] + f[:, 1:]) * dv
    tail = np.concatenate([np.cumsum(trap[:, ::-1], axis=1)[:, ::-1], np.zeros((f.shape[0], 1))], axis=1)
    xi = sol.Y[:, -1]
    src = _FeatureSource(sol.basis, ens)
    worst = 0.0
    for k in range(sol.grid.steps - 1):
        inc = sol.Y[:, k + 1] - sol.Y[:, k] + trap[:, k]
        eps = xi + tail[:, k + 1] - sol.Y[:, k + 1]
        p = sol.projections[k]
        F = src.at(k)
        X = np.column_stack([np.ones(F.shape[0]), p.standardize(F)]) if p.chol is not None else np.ones((F.shape[0], 1))
        coef, *_ = np.linalg.lstsq(X, inc, rcond=None)
        ce, *_ = np.linalg.lstsq(X, eps, rcond=None)
        resid = eps - X @ ce
        s2 = resid @ resid / max(X.shape[0] - X.shape[1], 1)
        se = np.sqrt(np.maximum(np.diag(s2 * np.linalg.pinv(X.T @ X)), 0.0))
        # ridge shrinkage leaves a bias of relative size ~1e-8; do not resolve below it
        se = np.hypot(se, 1e-6 * (np.std(sol.Y[:, k + 1]) + abs(np.mean(sol.Y[:, k + 1]))))
        worst = max(worst, max(abs(z_score(c, s, 1.0)) for c, s in zip(coef, se)))
    return float(worst)


def bracket_consistency(sol: BsdeGridSolution) -> np.ndarray:
    """z-scores of ``sum Z dV`` against the realized covariation ``sum dM^Y dM_X`` per coordinate."""
    ens, f = sol.ensemble, sol.f_values
    dv = np.diff(sol.grid.nodes)
    dmy = sol.Y[:, 1:] - sol.Y[:, :-1] + 0.5 * (f[:, :-1] + f[:, 1:]) * dv
    realized = np.einsum("pk,pki->pi", dmy, ens.dM)
    model = np.einsum("pki,k->pi", sol.Z, dv)
    diff = model - realized
    n = diff.shape[0]
    return np.array([z_score(diff[:, i].mean(), diff[:, i].std(ddof=1) / math.sqrt(n), 1.0) for i in range(diff.shape[1])])


# -- Y field on a panel --------------------------------------------------------
def default_panel(spec: ScenarioSpec, level: float | None = None) -> list[PointedPath]:
    """Start points (0, flat), (T/2, flat), (T/2, ramp), (T/2, one jump), (0.9 T, ramp)."""
    T, d = spec.horizon, spec.d
    x0 = spec.numerics.panel_level if level is None else level

    def flat(s):
        return PointedPath(s, constant_path(np.full(d, x0), T))

    def ramp(s):
        t = np.linspace(0.0, s, 21)
        vals = x0 + np.repeat((t / T)[:, None], d, axis=1)
        return PointedPath(s, CadlagPath(t, vals, T))

    def jump(s):
        vals = np.array([np.full(d, x0), np.full(d, x0 + 1.0)])
        return PointedPath(s, CadlagPath([0.0, s / 2], vals, T))

    return [flat(0.0), flat(T / 2), ramp(T / 2), jump(T / 2), ramp(0.9 * T)]


def evaluate_Y_field(
    spec: ScenarioSpec,
    panel: list[PointedPath],
    steps: int | None = None,
    n_paths: int | None = None,
    seed: int | None = None,
    basis: RegressionBasis | None = None,
    picard: PicardSettings | None = None,
    threads: int | None = None,
) -> list[tuple[float, float]]:
    """``(Y_s(eta), stderr)`` for each panel point; one solve per point, all with the same seed."""
    num = spec.numerics
    steps = steps or num.steps
    n_paths = n_paths or num.paths
    seed = num.seed if seed is None else seed
    basis = basis or RegressionBasis(num.basis, num.ridge)
    picard = picard or PicardSettings(num.picard_kmax, num.picard_tol)
    out = []
    for start in panel:
        if start.s >= spec.horizon:
            out.append((float(evaluate_functional(spec.xi, spec.horizon, start.eta)), 0.0))
            continue
        n = max(1, int(round(steps * (spec.horizon - start.s) / spec.horizon)))
        grid = TimeGrid(start.s, spec.horizon, n)
        sol = solve_bsde(spec, start, grid, basis, n_paths, picard, seed, threads, keep_ensemble=False)
        out.append((sol.Y_s, sol.Y_s_stderr))
    return out


# -- export -----------------------------------------------------------------------
_MAGIC = b"PDSO"


def export_solution(sol: BsdeGridSolution, fmt: str = "csv", config: dict | None = None) -> str | bytes:
    """Serialize ``(grid, Y, Z)`` as ``csv``, ``binary`` or ``json`` (summary only)."""
    n, d = sol.grid.steps, sol.Z.shape[2]
    ids = np.arange(sol.Y.shape[0]) if sol.path_ids is None else sol.path_ids
    if fmt == "json":
        out = dict(sol.summary())
        out["grid"] = {"s": sol.grid.s, "T": sol.grid.T, "steps": n}
        out["seed"] = sol.seed
        if config is not None:
            out["config"] = config
        return json.dumps(out, indent=2, sort_keys=True)
    if fmt == "csv":
        buf = io.StringIO()
        meta = {"seed": sol.seed, "Y_s": sol.Y_s, "stderr": sol.Y_s_stderr, "deltas": list(sol.deltas), "converged": sol.converged}
        buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        if config is not None:
            buf.write("# config=" + json.dumps(config, sort_keys=True) + "\n")
        buf.write(",".join(["t", "path_id", "Y"] + [f"Z_{i + 1}" for i in range(d)]) + "\n")
        for k in range(n + 1):
            t = repr(float(sol.grid.nodes[k]))
            for p in range(sol.Y.shape[0]):
                zs = [repr(float(z)) for z in sol.Z[p, k]] if k < n else [""] * d
                buf.write(",".join([t, str(int(ids[p])), repr(float(sol.Y[p, k])), *zs]) + "\n")
        return buf.getvalue()
    if fmt == "binary":
        head = _MAGIC + struct.pack("<IIIQI", d, n, sol.Y.shape[0], sol.seed, len(sol.deltas))
        meta = np.array([sol.Y_s, sol.Y_s_stderr, float(sol.converged), *sol.deltas], dtype="<f8")
        parts = [meta, sol.grid.nodes, ids.astype(float), sol.Y, sol.Z]
        return head + b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in parts)
    raise ValueError(f"unknown export format {fmt!r}")


def load_solution(data: str | bytes, fmt: str = "csv") -> BsdeGridSolution | dict:
    """Inverse of :func:`export_solution` (``json`` returns the summary dictionary)."""
    if fmt == "json":
        return json.loads(data)
    if fmt == "csv":
        lines = data.splitlines()
        meta = json.loads(lines[0][2:])
        body = [ln for ln in lines[1:] if not ln.startswith("#")]
        header = body[0].split(",")
        d = len(header) - 3
        rows = [r.split(",") for r in body[1:]]
        times = sorted({float(r[0]) for r in rows})
        n = len(times) - 1
        ids = []
        for r in rows:
            if float(r[0]) != times[0]:
                break
            ids.append(int(r[1]))
        N = len(ids)
        Y = np.array([float(r[2]) for r in rows]).reshape(n + 1, N).T.copy()
        Z = np.array([[float(x) for x in r[3:]] for r in rows[: n * N]]).reshape(n, N, d).transpose(1, 0, 2).copy()
        grid = TimeGrid(times[0], times[-1], n, np.array(times))
        return BsdeGridSolution(grid, Y, Z, tuple(meta["deltas"]), meta["Y_s"], meta["stderr"], meta["converged"], np.array(ids), meta["seed"])
    if fmt == "binary":
        if data[:4] != _MAGIC:
            raise ValueError("not a solution block")
        d, n, N, seed, n_it = struct.unpack_from("<IIIQI", data, 4)
        arr = np.frombuffer(data, dtype="<f8", offset=4 + struct.calcsize("<IIIQI"))
        meta, arr = arr[: 3 + n_it], arr[3 + n_it :]
        nodes, arr = arr[: n + 1], arr[n + 1 :]
        ids, arr = arr[:N], arr[N:]
        Y, arr = arr[: N * (n + 1)].reshape(N, n + 1), arr[N * (n + 1) :]
        Z = arr[: N * n * d].reshape(N, n, d)
        grid = TimeGrid(nodes[0], nodes[-1], n, nodes.copy())
        return BsdeGridSolution(grid, Y.copy(), Z.copy(), tuple(meta[3:].tolist()), float(meta[0]), float(meta[1]), bool(meta[2]), ids.astype(np.int64), seed)
    raise ValueError(f"unknown export format {fmt!r}")
