"""Cadlag paths on finite grids and the path surgeries used by the library.

A path is stored as a strictly increasing grid ``times`` (starting at 0) and
one point of R^d per grid time.  Evaluation is right-continuous and
piecewise constant: ``path(t)`` is the value at the largest grid time ``<= t``,
and the last value is held forever after the final grid time.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CadlagPath",
    "PointedPath",
    "PathError",
    "stop",
    "pre_stop",
    "vertical_bump",
    "d_infinity",
    "same_path",
    "constant_path",
]


class PathError(ValueError):
    """Raised for malformed paths or invalid path surgeries."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CadlagPath:
    """Right-continuous piecewise-constant path with constant extrapolation.

    Parameters
    ----------
    times : array_like, shape (m,)
        Strictly increasing grid, ``times[0] == 0`` and ``times[-1] <= horizon``.
    values : array_like, shape (m, d) or (m,)
        Path value on ``[times[j], times[j+1])``.
    horizon : float
        Time horizon ``T > 0``.
    jump_flags : array_like of bool, shape (m,), optional
        Marks grid points where a driving Poisson arrival occurred.
    """

    times: np.ndarray
    values: np.ndarray
    horizon: float
    jump_flags: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.size == 0:
            raise PathError("times must be a non-empty 1-d array")
        if values.shape[0] != times.size:
            raise PathError(f"values has {values.shape[0]} rows for {times.size} grid times")
        if times[0] != 0.0:
            raise PathError("grid must start at t = 0")
        if np.any(np.diff(times) <= 0):
            raise PathError("grid times must be strictly increasing")
        horizon = float(self.horizon)
        if not horizon > 0:
            raise PathError("horizon must be positive")
        if times[-1] > horizon:
            raise PathError(f"last grid time {times[-1]} exceeds horizon {horizon}")
        if not np.all(np.isfinite(values)):
            raise PathError("path values must be finite")
        flags = self.jump_flags
        flags = np.zeros(times.size, dtype=bool) if flags is None else np.asarray(flags, dtype=bool)
        if flags.shape != times.shape:
            raise PathError("jump_flags must have one entry per grid time")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "jump_flags", _frozen(flags))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def index_at(self, t: float) -> int:
        """Index of the largest grid time ``<= t``."""
        if t < 0:
            raise PathError("paths are not defined before t = 0")
        return int(np.searchsorted(self.times, t, side="right")) - 1

    def evaluate(self, t: float) -> np.ndarray:
        return self.values[self.index_at(t)].copy()

    __call__ = evaluate

    def left_limit(self, t: float) -> np.ndarray:
        if t <= 0:
            raise PathError("left limit is undefined at t = 0")
        return self.values[int(np.searchsorted(self.times, t, side="left")) - 1].copy()

    def sup_norm(self, t: float | None = None) -> float:
        """``sup_{r <= t} ||path(r)||`` (Euclidean norm)."""
        v = self.values if t is None else self.values[: self.index_at(t) + 1]
        return float(np.max(np.linalg.norm(v, axis=1)))

    # -- serialization -------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# horizon={self.horizon!r}\n")
        cols = ["t"] + [f"x_{i + 1}" for i in range(self.dim)] + ["jump_flag"]
        buf.write(",".join(cols) + "\n")
        for t, row, flag in zip(self.times.tolist(), self.values.tolist(), self.jump_flags.tolist()):
            buf.write(",".join([repr(t), *map(repr, row), str(int(flag))]) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CadlagPath":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# horizon="):
            raise PathError("missing '# horizon=' header line")
        horizon = float(lines[0].split("=", 1)[1])
        header = lines[1].split(",")
        if header[0] != "t" or header[-1] != "jump_flag":
            raise PathError(f"unexpected CSV header {header}")
        rows = [ln.split(",") for ln in lines[2:]]
        times = [float(r[0]) for r in rows]
        values = [[float(x) for x in r[1:-1]] for r in rows]
        flags = [bool(int(r[-1])) for r in rows]
        return cls(np.array(times), np.array(values).reshape(len(rows), len(header) - 2), horizon, np.array(flags))

    def to_json(self) -> str:
        points = [
            [t, *row, int(flag)]
            for t, row, flag in zip(self.times.tolist(), self.values.tolist(), self.jump_flags.tolist())
        ]
        return json.dumps({"horizon": self.horizon, "dim": self.dim, "points": points})

    @classmethod
    def from_json(cls, text: str) -> "CadlagPath":
        obj = json.loads(text)
        pts = obj["points"]
        d = int(obj["dim"])
        times = np.array([p[0] for p in pts], dtype=float)
        values = np.array([p[1 : 1 + d] for p in pts], dtype=float).reshape(len(pts), d)
        flags = np.array([bool(p[1 + d]) for p in pts])
        return cls(times, values, obj["horizon"], flags)


@dataclass(frozen=True, eq=False)
class PointedPath:
    """A start time ``s`` together with a path constant after ``s``."""

    s: float
    eta: CadlagPath

    def __post_init__(self) -> None:
        s = float(self.s)
        if s < 0 or s > self.eta.horizon:
            raise PathError(f"start time {s} outside [0, {self.eta.horizon}]")
        after = self.eta.times > s
        if np.any(after) and not np.all(self.eta.values[after] == self.eta.values[self.eta.index_at(s)]):
            raise PathError("eta must be constant after the start time s")
        object.__setattr__(self, "s", s)

    @classmethod
    def from_path(cls, s: float, path: CadlagPath) -> "PointedPath":
        return cls(s, stop(path, s))

    @property
    def horizon(self) -> float:
        return self.eta.horizon

    @property
    def dim(self) -> int:
        return self.eta.dim

    def value(self) -> np.ndarray:
        """``eta(s)``."""
        return self.eta.evaluate(self.s)


def constant_path(value, horizon: float) -> CadlagPath:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return CadlagPath(np.array([0.0]), value[None, :], horizon)


def stop(path: CadlagPath, t: float) -> CadlagPath:
    """The path stopped at ``t``: ``r -> path(min(r, t))``."""
    if t < 0:
        raise PathError("stopping time must be non-negative")
    keep = path.times <= t
    return CadlagPath(path.times[keep], path.values[keep], path.horizon, path.jump_flags[keep])


def pre_stop(path: CadlagPath, t: float) -> CadlagPath:
    """Equal to ``path`` on ``[0, t)`` and to the left limit ``path(t-)`` afterwards."""
    if t <= 0:
        raise PathError("pre_stop needs t > 0: the left limit at 0 is undefined")
    keep = path.times < t
    times = np.append(path.times[keep], min(t, path.horizon))
    values = np.vstack([path.values[keep], path.left_limit(t)])
    flags = np.append(path.jump_flags[keep], False)
    if times[-1] == times[-2]:
        times, values, flags = times[:-1], values[:-1], flags[:-1]
    return CadlagPath(times, values, path.horizon, flags)


def vertical_bump(path: CadlagPath, t: float, x) -> CadlagPath:
    """Add ``x`` to the path on ``[t, infinity)``, inserting a grid point at ``t`` if needed."""
    if t < 0 or t > path.horizon:
        raise PathError(f"bump time {t} outside [0, {path.horizon}]")
    x = np.broadcast_to(np.asarray(x, dtype=float), (path.dim,))
    times, values, flags = path.times, path.values.copy(), path.jump_flags
    j = int(np.searchsorted(times, t, side="left"))
    if j == times.size or times[j] != t:
        times = np.insert(times, j, t)
        values = np.insert(values, j, values[j - 1], axis=0)
        flags = np.insert(flags, j, False)
    values[j:] += x
    return CadlagPath(times, values, path.horizon, flags)


def _merged_values(p1: CadlagPath, p2: CadlagPath):
    grid = np.union1d(p1.times, p2.times)
    i1 = np.searchsorted(p1.times, grid, side="right") - 1
    i2 = np.searchsorted(p2.times, grid, side="right") - 1
    return p1.values[i1], p2.values[i2]


def same_path(p1: CadlagPath, p2: CadlagPath, atol: float = 0.0) -> bool:
    """True when both paths evaluate identically (within ``atol``) on the merged grid."""
    if p1.dim != p2.dim:
        return False
    v1, v2 = _merged_values(p1, p2)
    return bool(np.all(np.abs(v1 - v2) <= atol))


def d_infinity(p1: PointedPath, p2: PointedPath) -> float:
    """``sup_t |eta2(t) - eta1(t)| + |s2 - s1|`` with the max-norm on R^d."""
    if p1.horizon != p2.horizon:
        raise PathError(f"horizon mismatch: {p1.horizon} vs {p2.horizon}")
    if p1.dim != p2.dim:
        raise PathError("dimension mismatch")
    v1, v2 = _merged_values(p1.eta, p2.eta)
    return float(np.max(np.abs(v2 - v1))) + abs(p2.s - p1.s)
