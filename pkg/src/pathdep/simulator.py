"""Euler scheme for path-dependent jump diffusions.

One step from ``t_k`` to ``t_{k+1}`` with left-point coefficients::

    X_{k+1} = X_k + beta_k dt + sigma_k sqrt(dt) N_k
              + sum_a n_{k,a} gamma_k(., y_a) - dt sum_a F_a gamma_k(., y_a)

``n_{k,a}`` are independent Poisson(F_a dt) arrival counts per atom, which in law is
the compound Poisson process of rate ``F(R^d)`` with atom ``a`` drawn with
probability ``F_a / F(R^d)``.  All randomness is counter-based (see
:mod:`pathdep.rng`), so an ensemble is a pure function of the seed and path ids.
"""

from __future__ import annotations

import io
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import rng
from .functionals import FunctionalSpec, evaluate_nodes, needs_history
from .paths import CadlagPath, PathError, PointedPath, stop
from .scenario import ScenarioSpec

__all__ = [
    "BLOCK_SIZE",
    "SimulationError",
    "TimeGrid",
    "Ensemble",
    "simulate",
    "simulate_batch",
    "resimulate_from",
    "resimulate_nodes",
    "empirical_characteristics",
    "CharacteristicsReport",
    "resolve_threads",
]

BLOCK_SIZE = 4096


class SimulationError(RuntimeError):
    """Non-finite state or invalid simulation request."""


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("PATHDEP_THREADS", "1") or 1)
    if threads < 1:
        raise ValueError("thread count must be positive")
    return int(threads)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Nodes ``s = t_0 < ... < t_n = T`` (uniform unless ``nodes`` is given)."""

    s: float
    T: float
    steps: int
    nodes: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise SimulationError("time grid needs at least one step")
        if not float(self.T) > float(self.s) >= 0:
            raise SimulationError(f"need 0 <= s < T, got s={self.s}, T={self.T}")
        nodes = np.linspace(self.s, self.T, self.steps + 1) if self.nodes is None else np.asarray(self.nodes, float)
        if nodes.shape != (self.steps + 1,) or np.any(np.diff(nodes) <= 0):
            raise SimulationError("grid nodes must be strictly increasing with steps + 1 entries")
        if nodes[0] != self.s or nodes[-1] != self.T:
            raise SimulationError("grid nodes must start at s and end at T")
        nodes = nodes.copy()
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def max_step(self) -> float:
        return float(np.max(self.dt))

    def tail(self, k: int) -> "TimeGrid":
        """Grid made of nodes ``t_k .. t_n``."""
        if not 0 <= k < self.steps:
            raise SimulationError(f"tail index {k} outside 0..{self.steps - 1}")
        return TimeGrid(self.nodes[k], self.T, self.steps - k, self.nodes[k:])

    def index_of(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[j] - t) > 1e-12 * max(1.0, abs(t)):
            raise SimulationError(f"time {t} is not a grid node")
        return j


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Simulated paths from one or several starting paths.

    Attributes
    ----------
    prefix_times : ndarray, shape (p,)
        Grid times of the starting path strictly before ``s``.
    prefix_values : ndarray, shape (n_paths, p, d)
    X : ndarray, shape (n_paths, n + 1, d)
        State at the grid nodes.
    dM, dMc, J : ndarray, shape (n_paths, n, d)
        Per-step increments of the martingale part ``X - int beta``, of its continuous part,
        and the raw jump sum.
    arrivals : ndarray of int, shape (n_paths, n, K)
        Poisson arrivals per atom and step.
    """

    grid: TimeGrid
    prefix_times: np.ndarray
    prefix_values: np.ndarray
    X: np.ndarray
    dM: np.ndarray
    dMc: np.ndarray
    J: np.ndarray
    arrivals: np.ndarray
    seed: int
    path_ids: np.ndarray
    initial: PointedPath | None = None

    def __post_init__(self) -> None:
        for name in ("prefix_times", "prefix_values", "X", "dM", "dMc", "J", "arrivals", "path_ids"):
            a = np.asarray(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[2]

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def offset(self) -> int:
        """Index of node ``t_0 = s`` in :meth:`full_times`."""
        return self.prefix_times.size

    @property
    def jump_flags(self) -> np.ndarray:
        """Shape (n_paths, n + 1); True at nodes reached by a step with an arrival."""
        flags = np.zeros(self.X.shape[:2], dtype=bool)
        flags[:, 1:] = self.arrivals.sum(axis=-1) > 0
        return flags

    def full_times(self) -> np.ndarray:
        return np.concatenate([self.prefix_times, self.grid.nodes])

    def full_values(self, rows=slice(None)) -> np.ndarray:
        return np.concatenate([self.prefix_values[rows], self.X[rows]], axis=1)

    def path(self, i: int) -> CadlagPath:
        flags = np.concatenate([np.zeros(self.offset, dtype=bool), self.jump_flags[i]])
        return CadlagPath(self.full_times(), self.full_values([i])[0], self.grid.T, flags)

    def node_values(self, spec: FunctionalSpec, rows=slice(None)) -> np.ndarray:
        """``spec`` at every grid node of every path, shape (n_paths, n + 1)."""
        return evaluate_nodes(spec, self.full_times(), self.full_values(rows))[:, self.offset :]

    def same_as(self, other: "Ensemble") -> bool:
        """Bit-exact equality of all stored arrays."""
        return (
            self.seed == other.seed
            and np.array_equal(self.grid.nodes, other.grid.nodes)
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("prefix_times", "prefix_values", "X", "dM", "dMc", "J", "arrivals", "path_ids")
            )
        )

    # -- export ---------------------------------------------------------
    def to_csv(self) -> str:
        """One row per path per node; prefix rows carry negative node indices."""
        d, K = self.d, self.arrivals.shape[2]
        buf = io.StringIO()
        buf.write(f"# seed={self.seed} d={d} n={self.steps} n_paths={self.n_paths} K={K} s={self.grid.s!r} T={self.grid.T!r}\n")
        cols = ["path_id", "node", "t"]
        cols += [f"x_{i + 1}" for i in range(d)] + [f"dM_{i + 1}" for i in range(d)]
        cols += [f"dMc_{i + 1}" for i in range(d)] + [f"J_{i + 1}" for i in range(d)]
        cols += [f"n_{a + 1}" for a in range(K)] + ["jump_flag"]
        buf.write(",".join(cols) + "\n")
        p = self.offset
        flags = self.jump_flags
        blank = "," * (3 * d + K)
        for i in range(self.n_paths):
            pid = int(self.path_ids[i])
            for j in range(p):
                xs = ",".join(map(repr, self.prefix_values[i, j].tolist()))
                buf.write(f"{pid},{j - p},{self.prefix_times[j]!r},{xs}{blank},0\n")
            for k in range(self.steps + 1):
                row = [str(pid), str(k), repr(float(self.grid.nodes[k]))]
                row += map(repr, self.X[i, k].tolist())
                if k < self.steps:
                    row += map(repr, self.dM[i, k].tolist())
                    row += map(repr, self.dMc[i, k].tolist())
                    row += map(repr, self.J[i, k].tolist())
                    row += map(str, self.arrivals[i, k].tolist())
                else:
                    row += [""] * (3 * d + K)
                row.append(str(int(flags[i, k])))
                buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Ensemble":
        lines = text.splitlines()
        meta = dict(kv.split("=", 1) for kv in lines[0][1:].split())
        d, n, n_paths, K = (int(meta[k]) for k in ("d", "n", "n_paths", "K"))
        s, T, seed = float(meta["s"]), float(meta["T"]), int(meta["seed"])
        body = [ln for ln in lines[1:] if ln and not ln.startswith("#")]
        rows = [ln.split(",") for ln in body[1:]]
        per_path = len(rows) // n_paths
        p = per_path - (n + 1)
        nodes = np.array([float(r[2]) for r in rows[p : p + n + 1]])
        prefix_times = np.array([float(r[2]) for r in rows[:p]])
        grid = TimeGrid(s, T, n, nodes)

        def block(c0, width, kind=float):
            out = np.empty((n_paths, per_path, width))
            for idx, r in enumerate(rows):
                vals = r[c0 : c0 + width]
                out[idx // per_path, idx % per_path] = [kind(v) if v else 0 for v in vals]
            return out

        xs = block(3, d)
        ens = cls(
            grid=grid,
            prefix_times=prefix_times,
            prefix_values=xs[:, :p],
            X=xs[:, p:],
            dM=block(3 + d, d)[:, p : p + n],
            dMc=block(3 + 2 * d, d)[:, p : p + n],
            J=block(3 + 3 * d, d)[:, p : p + n],
            arrivals=block(3 + 4 * d, K, int)[:, p : p + n].astype(np.int64),
            seed=seed,
            path_ids=np.array([int(rows[i * per_path][0]) for i in range(n_paths)], dtype=np.int64),
        )
        return ens

    _MAGIC = b"PDEN"

    def to_bytes(self) -> bytes:
        """Header ``(magic, d, n, n_paths, K, p, seed)`` followed by little-endian doubles."""
        K, p = self.arrivals.shape[2], self.offset
        header = self._MAGIC + struct.pack("<IIIIIQ", self.d, self.steps, self.n_paths, K, p, self.seed)
        parts = [
            self.grid.nodes,
            self.prefix_times,
            self.prefix_values,
            self.X,
            self.dM,
            self.dMc,
            self.J,
            self.arrivals,
            self.path_ids,
        ]
        body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in parts)
        return header + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ensemble":
        if data[:4] != cls._MAGIC:
            raise ValueError("not an ensemble block")
        d, n, n_paths, K, p, seed = struct.unpack_from("<IIIIIQ", data, 4)
        arr = np.frombuffer(data, dtype="<f8", offset=4 + struct.calcsize("<IIIIIQ"))
        shapes = [(n + 1,), (p,), (n_paths, p, d), (n_paths, n + 1, d), (n_paths, n, d), (n_paths, n, d), (n_paths, n, d), (n_paths, n, K), (n_paths,)]
        out, pos = [], 0
        for shp in shapes:
            size = int(np.prod(shp))
            out.append(arr[pos : pos + size].reshape(shp).astype(float))
            pos += size
        nodes = out[0]
        return cls(
            grid=TimeGrid(nodes[0], nodes[-1], n, nodes),
            prefix_times=out[1],
            prefix_values=out[2],
            X=out[3],
            dM=out[4],
            dMc=out[5],
            J=out[6],
            arrivals=out[7].astype(np.int64),
            seed=seed,
            path_ids=out[8].astype(np.int64),
        )


# -- simulation core ------------------------------------------------------
def _coef_at(spec: ScenarioSpec, t: float, times: np.ndarray, hist: np.ndarray):
    """beta (b, d), sigma (b, d, d), gamma (b, K, d) at time ``t`` on stopped histories."""
    shift = np.zeros(times.size)
    shift[-1] = t - times[-1]

    def ev(f):
        if needs_history(f):
            return evaluate_nodes(f, times, hist, shift=shift)[:, -1]
        return evaluate_nodes(f, times[-1:] + shift[-1:], hist[:, -1:])[:, 0]

    beta = np.stack([ev(f) for f in spec.beta], axis=-1)
    sigma = np.stack([np.stack([ev(f) for f in row], axis=-1) for row in spec.sigma], axis=-2)
    if spec.gamma:
        gamma = np.stack([np.stack([ev(f) for f in row], axis=-1) for row in spec.gamma], axis=-2)
    else:
        gamma = np.zeros((hist.shape[0], 0, spec.d))
    return beta, sigma, gamma


def _simulate_block(spec, prefix_times, prefix_values, x0, nodes, seed, ids):
    b, d = x0.shape
    n = nodes.size - 1
    K = spec.jumps.n_atoms
    weights = spec.jumps.weight_array()
    times = np.concatenate([prefix_times, nodes])
    p = prefix_times.size
    hist = np.empty((b, p + n + 1, d))
    hist[:, :p] = prefix_values
    hist[:, p] = x0
    dM = np.empty((b, n, d))
    dMc = np.empty((b, n, d))
    J = np.empty((b, n, d))
    arrivals = np.zeros((b, n, K), dtype=np.int64)
    for k in range(n):
        dt = nodes[k + 1] - nodes[k]
        beta, sigma, gamma = _coef_at(spec, nodes[k], times[: p + k + 1], hist[:, : p + k + 1])
        z = rng.normals(seed, ids, k, d)
        cont = np.einsum("bij,bj->bi", sigma, z) * np.sqrt(dt)
        if K:
            counts = rng.poisson(seed, ids, k, weights * dt)
            jumps = np.einsum("ba,bai->bi", counts.astype(float), gamma)
            comp = np.einsum("a,bai->bi", weights, gamma) * dt
            arrivals[:, k] = counts
        else:
            jumps = np.zeros((b, d))
            comp = np.zeros((b, d))
        dm = cont + jumps - comp
        nxt = hist[:, p + k] + beta * dt + dm
        bad = ~np.all(np.isfinite(nxt), axis=1)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise SimulationError(f"non-finite state on path {int(ids[i])} at step {k} (t={nodes[k]:.6g})")
        hist[:, p + k + 1] = nxt
        dM[:, k] = dm
        dMc[:, k] = cont
        J[:, k] = jumps
    return hist[:, p:], dM, dMc, J, arrivals


def simulate_batch(
    spec: ScenarioSpec,
    prefix_times,
    prefix_values,
    x0,
    grid: TimeGrid,
    seed: int,
    path_ids=None,
    threads: int | None = None,
) -> Ensemble:
    """Simulate from per-path starting histories (shared prefix grid)."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n_paths, d = x0.shape
    if d != spec.d:
        raise SimulationError(f"start has dimension {d}, scenario has {spec.d}")
    prefix_times = np.asarray(prefix_times, dtype=float)
    prefix_values = np.broadcast_to(np.asarray(prefix_values, dtype=float), (n_paths, prefix_times.size, d))
    if prefix_times.size and prefix_times[-1] >= grid.s:
        raise SimulationError("prefix times must be strictly before the grid start")
    ids = np.arange(n_paths, dtype=np.int64) if path_ids is None else np.asarray(path_ids, dtype=np.int64)
    starts = range(0, n_paths, BLOCK_SIZE)

    def run(i0):
        sl = slice(i0, min(i0 + BLOCK_SIZE, n_paths))
        return _simulate_block(spec, prefix_times, prefix_values[sl], x0[sl], grid.nodes, seed, ids[sl])

    workers = resolve_threads(threads)
    if workers == 1 or len(starts) == 1:
        parts = [run(i0) for i0 in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    X, dM, dMc, J, arrivals = (np.concatenate([pt[j] for pt in parts]) for j in range(5))
    return Ensemble(grid, prefix_times, np.array(prefix_values), X, dM, dMc, J, arrivals, int(seed), ids)


def _prefix(start: PointedPath):
    eta = start.eta
    keep = eta.times < start.s
    return eta.times[keep], eta.values[keep], start.value()


def simulate(
    spec: ScenarioSpec,
    start: PointedPath,
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    threads: int | None = None,
) -> Ensemble:
    """Sample ``n_paths`` Euler paths of the SDE started at ``(s, eta)``."""
    if n_paths < 1:
        raise SimulationError("n_paths must be positive")
    if abs(start.s - grid.s) > 1e-12:
        raise SimulationError(f"start time {start.s} does not match grid start {grid.s}")
    if start.dim != spec.d:
        raise SimulationError(f"start path has dimension {start.dim}, scenario has {spec.d}")
    pt, pv, x0 = _prefix(start)
    ens = simulate_batch(spec, pt, pv[None], np.broadcast_to(x0, (n_paths, spec.d)), grid, seed, threads=threads)
    object.__setattr__(ens, "initial", start)
    return ens


def resimulate_from(
    spec: ScenarioSpec,
    path: CadlagPath,
    t: float,
    grid_tail: TimeGrid,
    n_inner: int,
    seed: int,
    threads: int | None = None,
) -> Ensemble:
    """Restart from ``(t, path stopped at t)``; ``t`` must be a grid time of ``path``."""
    if not np.any(np.abs(path.times - t) <= 1e-12 * max(1.0, t)) and not (t > path.times[-1]):
        raise SimulationError(f"restart time {t} is not a node of the outer path")
    return simulate(spec, PointedPath(t, stop(path, t)), grid_tail, n_inner, seed, threads)


def resimulate_nodes(
    spec: ScenarioSpec, ens: Ensemble, k: int, n_inner: int, seed: int, rows=None, threads: int | None = None
) -> Ensemble:
    """Inner ensembles restarted at node ``k`` from each outer path (outer-major order)."""
    rows = np.arange(ens.n_paths) if rows is None else np.asarray(rows)
    hist = ens.full_values(rows)
    p = ens.offset
    times = ens.full_times()[: p + k]
    pre = np.repeat(hist[:, : p + k], n_inner, axis=0)
    x0 = np.repeat(hist[:, p + k], n_inner, axis=0)
    return simulate_batch(spec, times, pre, x0, ens.grid.tail(k), seed, threads=threads)


# -- characteristics ------------------------------------------------------
def _z(diff: float, se: float, scale: float = 1.0) -> float:
    if se > 0:
        return float(diff / se)
    return 0.0 if abs(diff) <= 1e-12 * max(1.0, scale) else float(np.copysign(np.inf, diff))


@dataclass(frozen=True)
class CharacteristicsReport:
    drift: np.ndarray
    drift_expected: np.ndarray
    drift_z: np.ndarray
    qv: np.ndarray
    qv_expected: np.ndarray
    qv_rel_error: np.ndarray
    qv_z: np.ndarray
    jump_counts: np.ndarray
    jump_counts_expected: np.ndarray
    jump_counts_z: np.ndarray
    jump_mean: np.ndarray
    jump_mean_expected: np.ndarray
    jump_mean_z: np.ndarray
    atom_chi2_pvalue: float

    def max_abs_z(self) -> float:
        zs = [self.drift_z, self.qv_z, self.jump_counts_z, self.jump_mean_z]
        return float(max((np.max(np.abs(z)) for z in zs if np.size(z)), default=0.0))

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}


def empirical_characteristics(ens: Ensemble, spec: ScenarioSpec) -> CharacteristicsReport:
    """Compare drift, continuous quadratic variation and jump activity with the model's characteristics.

    Expected values are ensemble means of the pathwise integrals of ``beta``,
    ``sigma sigma^T`` and the jump compensator, so path-dependent coefficients are handled.
    """
    n = ens.n_paths
    sq = np.sqrt(n)
    times, vals = ens.full_times(), ens.full_values()
    dt = ens.grid.dt
    off = ens.offset
    beta = spec.beta_nodes(times, vals)[:, off:-1]
    sigma = spec.sigma_nodes(times, vals)[:, off:-1]
    gamma = spec.gamma_nodes(times, vals)[:, off:-1]

    inc = ens.X[:, -1] - ens.X[:, 0]
    int_beta = np.einsum("pkd,k->pd", beta, dt)
    diff = inc - int_beta
    drift_z = np.array([_z(diff[:, i].mean(), diff[:, i].std(ddof=1) / sq, abs(int_beta[:, i]).max()) for i in range(ens.d)])

    qv_paths = np.einsum("pki,pkj->pij", ens.dMc, ens.dMc)
    a = np.einsum("pkij,pklj,k->pil", sigma, sigma, dt)
    qd = qv_paths - a
    qv_z = np.vectorize(lambda i, j: _z(qd[:, i, j].mean(), qd[:, i, j].std(ddof=1) / sq, abs(a[:, i, j]).max()))(
        *np.indices((ens.d, ens.d))
    )
    qv, qv_exp = qv_paths.mean(0), a.mean(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(qv_exp != 0, np.abs(qv - qv_exp) / np.abs(qv_exp), np.abs(qv - qv_exp))

    w = spec.jumps.weight_array()
    span = ens.grid.T - ens.grid.s
    counts = ens.arrivals.sum(axis=1)
    exp_counts = w * span
    with np.errstate(divide="ignore", invalid="ignore"):
        counts_z = (counts.mean(0) - exp_counts) / np.sqrt(exp_counts / n)
    jsum = ens.J.sum(axis=1)
    comp = np.einsum("a,pkai,k->pi", w, gamma, dt) if w.size else np.zeros((n, ens.d))
    jd = jsum - comp
    jump_z = np.array([_z(jd[:, i].mean(), jd[:, i].std(ddof=1) / sq, 1.0) for i in range(ens.d)])
    tot = counts.sum(0)
    if w.size > 1 and tot.sum() > 0:
        pval = float(stats.chisquare(tot, w / w.sum() * tot.sum()).pvalue)
    else:
        pval = 1.0
    return CharacteristicsReport(
        drift=inc.mean(0),
        drift_expected=int_beta.mean(0),
        drift_z=drift_z,
        qv=qv,
        qv_expected=qv_exp,
        qv_rel_error=rel,
        qv_z=np.asarray(qv_z, dtype=float),
        jump_counts=counts.mean(0),
        jump_counts_expected=exp_counts,
        jump_counts_z=counts_z,
        jump_mean=jsum.mean(0),
        jump_mean_expected=comp.mean(0),
        jump_mean_z=jump_z,
        atom_chi2_pvalue=pval,
    )
