"""Catalog of path functionals ``Phi_t(omega)``.

Functionals are declarative trees (:class:`FunctionalSpec`) built from a closed
set of kinds.  Every kind is evaluated in O(grid length) by a single
vectorized primitive, :func:`evaluate_nodes`, which returns the value at each
grid time ``t_j`` of the path stopped at ``t_j``:

    out[..., j] = Phi_{t_j + shift_j}( omega^{t_j} + bump_j 1_{[t_j, inf)} )

so that vertical bumps (Dupire gradient) and horizontal extensions (time
derivative) are available at every node without re-walking the history.

Text form
---------
``kind(p1, p2, ..., child1, child2, ...)``, numbers first, e.g.::

    sum(running_integral(0), time_weighted(1.0, -1.0, coordinate(0)))

Coordinates are 0-based.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .paths import CadlagPath, stop

__all__ = [
    "FunctionalSpec",
    "FunctionalError",
    "KINDS",
    "parse_functional",
    "evaluate_functional",
    "evaluate_at",
    "append_node",
    "evaluate_nodes",
    "closed_form_nodes",
    "is_smooth",
    "needs_history",
    "max_coordinate",
    "growth",
    "const",
    "coord",
    "poly",
    "running_integral",
    "running_max",
    "time_weighted",
]


class FunctionalError(ValueError):
    """Unknown kind, bad arity, or dimension mismatch."""


# kind -> (min params, max params, min children, max children)
KINDS: dict[str, tuple[int, float, int, float]] = {
    "constant": (1, 1, 0, 0),
    "coordinate": (1, 1, 0, 0),
    "poly": (2, math.inf, 0, 0),
    "running_integral": (1, 1, 0, 0),
    "running_max": (1, 3, 0, 0),
    "product": (0, 0, 1, math.inf),
    "sum": (0, 0, 1, math.inf),
    "scale": (1, 1, 1, 1),
    "time_weighted": (1, math.inf, 0, 1),
}
_INDEXED = ("coordinate", "poly", "running_integral", "running_max")


@dataclass(frozen=True)
class FunctionalSpec:
    kind: str
    params: tuple[float, ...] = ()
    children: tuple["FunctionalSpec", ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise FunctionalError(f"unknown functional kind {self.kind!r}; expected one of {sorted(KINDS)}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "children", tuple(self.children))
        lo_p, hi_p, lo_c, hi_c = KINDS[self.kind]
        if not lo_p <= len(self.params) <= hi_p:
            raise FunctionalError(f"{self.kind}: expected {lo_p}..{hi_p} numeric parameters, got {len(self.params)}")
        if not lo_c <= len(self.children) <= hi_c:
            raise FunctionalError(f"{self.kind}: expected {lo_c}..{hi_c} sub-functionals, got {len(self.children)}")
        if self.kind in _INDEXED:
            i = self.params[0]
            if i < 0 or i != int(i):
                raise FunctionalError(f"{self.kind}: coordinate index must be a non-negative integer, got {i}")
        if not all(isinstance(c, FunctionalSpec) for c in self.children):
            raise FunctionalError("children must be FunctionalSpec instances")

    @property
    def index(self) -> int:
        return int(self.params[0])

    def __str__(self) -> str:
        args = [_fmt(p) for p in self.params] + [str(c) for c in self.children]
        return f"{self.kind}({', '.join(args)})"

    def __add__(self, other: "FunctionalSpec") -> "FunctionalSpec":
        return FunctionalSpec("sum", (), (self, other))

    def __mul__(self, other) -> "FunctionalSpec":
        if isinstance(other, FunctionalSpec):
            return FunctionalSpec("product", (), (self, other))
        return FunctionalSpec("scale", (float(other),), (self,))

    __rmul__ = __mul__


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == int(x) and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


# -- constructors ---------------------------------------------------------
def const(c: float) -> FunctionalSpec:
    return FunctionalSpec("constant", (c,))


def coord(i: int) -> FunctionalSpec:
    return FunctionalSpec("coordinate", (i,))


def poly(i: int, *coeffs: float) -> FunctionalSpec:
    """``sum_k coeffs[k] * x_i(t)**k``."""
    return FunctionalSpec("poly", (i, *coeffs))


def running_integral(i: int) -> FunctionalSpec:
    return FunctionalSpec("running_integral", (i,))


def running_max(i: int, use_abs: bool = False, cap: float = math.inf) -> FunctionalSpec:
    return FunctionalSpec("running_max", (i, float(use_abs), cap))


def time_weighted(coeffs: Sequence[float], child: FunctionalSpec | None = None) -> FunctionalSpec:
    """``(sum_k coeffs[k] t**k) * child`` (or the bare time polynomial)."""
    return FunctionalSpec("time_weighted", tuple(coeffs), () if child is None else (child,))


# -- text form ------------------------------------------------------------
def _number(node: ast.AST) -> float | None:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "inf":
        return math.inf
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _number(node.operand)
        if v is not None:
            return -v if isinstance(node.op, ast.USub) else v
    return None


def _from_ast(node: ast.AST) -> FunctionalSpec:
    if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)) or node.keywords:
        raise FunctionalError(f"expected kind(args...), got {ast.unparse(node)!r}")
    params: list[float] = []
    children: list[FunctionalSpec] = []
    for arg in node.args:
        v = _number(arg)
        if v is None:
            children.append(_from_ast(arg))
        elif children:
            raise FunctionalError(f"{node.func.id}: numeric parameters must precede sub-functionals")
        else:
            params.append(v)
    return FunctionalSpec(node.func.id, tuple(params), tuple(children))


def parse_functional(text: str) -> FunctionalSpec:
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise FunctionalError(f"cannot parse functional {text!r}: {exc.msg}") from None
    return _from_ast(tree.body)


# -- structural queries ---------------------------------------------------
def is_smooth(spec: FunctionalSpec) -> bool:
    """Whether closed-form Dupire derivatives are declared (C^{1,2} catalog members)."""
    if spec.kind == "running_max":
        return False
    return all(is_smooth(c) for c in spec.children)


def needs_history(spec: FunctionalSpec) -> bool:
    """False when the value depends only on ``(t, omega(t))``."""
    if spec.kind in ("running_integral", "running_max"):
        return True
    return any(needs_history(c) for c in spec.children)


def max_coordinate(spec: FunctionalSpec) -> int:
    own = spec.index if spec.kind in _INDEXED else -1
    return max([own, *(max_coordinate(c) for c in spec.children)])


def growth(spec: FunctionalSpec, horizon: float) -> tuple[float, int]:
    """Constants ``(C, p)`` with ``|Phi_t(w)| <= C (1 + sup_{r<=t} ||w(r)||^p)`` for ``t <= horizon``."""
    k, p = spec.kind, spec.params
    if k == "constant":
        return abs(p[0]), 1
    if k == "coordinate":
        return 1.0, 1
    if k == "poly":
        coeffs = p[1:]
        return float(sum(abs(c) for c in coeffs)), max(len(coeffs) - 1, 1)
    if k == "running_integral":
        return float(horizon), 1
    if k == "running_max":
        return 1.0, 1
    if k == "scale":
        c, q = growth(spec.children[0], horizon)
        return abs(p[0]) * c, q
    if k == "time_weighted":
        w = sum(abs(c) * max(horizon, 1.0) ** j for j, c in enumerate(p))
        if not spec.children:
            return float(w), 1
        c, q = growth(spec.children[0], horizon)
        return float(w) * c, q
    parts = [growth(c, horizon) for c in spec.children]
    if k == "sum":
        top = max(q for _, q in parts)
        return float(sum(c * (1.0 if q == top else 2.0) for c, q in parts)), top
    # product: (1 + S^a)(1 + S^b) <= 3 (1 + S^(a+b))
    c_total = 3.0 ** (len(parts) - 1) * math.prod(c for c, _ in parts)
    return float(c_total), int(sum(q for _, q in parts))


# -- evaluation -----------------------------------------------------------
def _check_dim(spec: FunctionalSpec, d: int) -> None:
    if max_coordinate(spec) >= d:
        raise FunctionalError(f"{spec} references coordinate {max_coordinate(spec)} but paths have dimension {d}")


def _nodes(spec: FunctionalSpec, times, values, bump, shift) -> np.ndarray:
    k, p = spec.kind, spec.params
    batch = values.shape[:-1]
    if k == "constant":
        return np.full(batch, p[0])
    if k in _INDEXED:
        i = spec.index
        x = values[..., i]
        cur = x if bump is None else x + bump[..., i]
        if k == "coordinate":
            return cur.copy() if bump is None else cur
        if k == "poly":
            return np.polynomial.polynomial.polyval(cur, p[1:])
        if k == "running_integral":
            past = np.cumsum(x[..., :-1] * np.diff(times), axis=-1)
            past = np.concatenate([np.zeros(batch[:-1] + (1,)), past], axis=-1)
            return past + cur * shift
        use_abs = len(p) > 1 and p[1] != 0
        cap = p[2] if len(p) > 2 else math.inf
        hist = np.abs(x) if use_abs else x
        cur = np.abs(cur) if use_abs else cur
        prev = np.maximum.accumulate(hist, axis=-1)[..., :-1]
        prev = np.concatenate([np.full(batch[:-1] + (1,), -np.inf), prev], axis=-1)
        return np.minimum(np.maximum(prev, cur), cap)
    if k == "time_weighted":
        w = np.polynomial.polynomial.polyval(times + shift, p)
        if not spec.children:
            return np.broadcast_to(w, batch).copy()
        return w * _nodes(spec.children[0], times, values, bump, shift)
    kids = [_nodes(c, times, values, bump, shift) for c in spec.children]
    if k == "scale":
        return p[0] * kids[0]
    if k == "sum":
        return np.sum(kids, axis=0)
    return np.prod(kids, axis=0)


def evaluate_nodes(spec: FunctionalSpec, times, values, bump=None, shift=0.0) -> np.ndarray:
    """Evaluate ``spec`` at every grid time of a batch of paths.

    Parameters
    ----------
    times : ndarray, shape (m,)
        Shared grid.
    values : ndarray, shape (..., m, d)
        Path values at the grid times.
    bump : ndarray, shape (..., m, d), optional
        Vertical bump applied at each node (node ``j`` sees ``values[..., j, :] + bump[..., j, :]``
        as its value from ``t_j`` on, history before ``t_j`` unchanged).
    shift : float or ndarray of shape (m,)
        Horizontal extension: node ``j`` is evaluated at time ``t_j + shift_j`` on the (bumped)
        path stopped at ``t_j``.

    Returns
    -------
    ndarray, shape (..., m)
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    _check_dim(spec, values.shape[-1])
    if bump is not None:
        bump = np.broadcast_to(np.asarray(bump, dtype=float), values.shape)
    return _nodes(spec, times, values, bump, np.asarray(shift, dtype=float))


def evaluate_at(spec: FunctionalSpec, t: float, times, values, bump=None) -> np.ndarray:
    """Value at time ``t`` of a batch of paths already stopped at ``t`` (``times[-1] <= t``).

    ``bump`` has shape (..., d) and is applied at time ``t``.
    """
    times, values = append_node(times, values, t)
    if bump is not None:
        full = np.zeros(values.shape)
        full[..., -1, :] = bump
        bump = full
    return evaluate_nodes(spec, times, values, bump)[..., -1]


def append_node(times, values, t: float):
    """Extend a stopped grid path flat up to a final node at ``t`` (no-op if ``times[-1] == t``)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if t < times[-1]:
        raise FunctionalError(f"path grid extends past evaluation time {t}")
    if t == times[-1]:
        return times, values
    return np.append(times, t), np.concatenate([values, values[..., -1:, :]], axis=-2)


def evaluate_functional(spec, t: float, path: CadlagPath):
    """Value of a functional (or nested list of functionals) at ``(t, path stopped at t)``.

    Times beyond the horizon are clamped (functionals are constant after T).
    """
    t = min(float(t), path.horizon)
    if isinstance(spec, FunctionalSpec):
        p = stop(path, t)
        return float(evaluate_at(spec, t, p.times, p.values))
    return np.array([evaluate_functional(s, t, path) for s in spec])


def closed_form_nodes(spec: FunctionalSpec, times, values, shift=0.0, bump=None):
    """Closed-form ``(Phi, grad Phi, hess Phi, D Phi)`` at every node, or ``None`` if not smooth.

    ``shift`` and ``bump`` act as in :func:`evaluate_nodes`.  Shapes are (..., m), (..., m, d),
    (..., m, d, d), (..., m).
    """
    if not is_smooth(spec):
        return None
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    _check_dim(spec, values.shape[-1])
    cur = values if bump is None else values + np.broadcast_to(np.asarray(bump, dtype=float), values.shape)
    return _closed(spec, times, values, cur, np.asarray(shift, dtype=float))


def _closed(spec, times, values, cur, shift):
    k, p = spec.kind, spec.params
    batch = values.shape[:-1]
    d = values.shape[-1]
    zero_g = np.zeros(batch + (d,))
    zero_h = np.zeros(batch + (d, d))
    zero = np.zeros(batch)
    if k == "constant":
        return np.full(batch, p[0]), zero_g, zero_h, zero
    if k == "coordinate":
        g = zero_g
        g[..., spec.index] = 1.0
        return cur[..., spec.index].copy(), g, zero_h, zero
    if k == "poly":
        i, c = spec.index, np.asarray(p[1:])
        x = cur[..., i]
        dc = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
        ddc = np.polynomial.polynomial.polyder(c, 2) if c.size > 2 else np.zeros(1)
        zero_g[..., i] = np.polynomial.polynomial.polyval(x, dc)
        zero_h[..., i, i] = np.polynomial.polynomial.polyval(x, ddc)
        return np.polynomial.polynomial.polyval(x, c), zero_g, zero_h, zero
    if k == "running_integral":
        v = _nodes(spec, times, values, cur - values, shift)
        zero_g[..., spec.index] = np.broadcast_to(shift, batch)
        return v, zero_g, zero_h, cur[..., spec.index].copy()
    if k == "time_weighted":
        tt = times + shift
        w = np.polynomial.polynomial.polyval(tt, p)
        dw = np.polynomial.polynomial.polyval(tt, np.polynomial.polynomial.polyder(p)) if len(p) > 1 else 0.0 * tt
        if not spec.children:
            return np.broadcast_to(w, batch).copy(), zero_g, zero_h, np.broadcast_to(dw, batch).copy()
        v, g, h, dv = _closed(spec.children[0], times, values, cur, shift)
        return w * v, w[..., None] * g, w[..., None, None] * h, dw * v + w * dv
    kids = [_closed(c, times, values, cur, shift) for c in spec.children]
    if k == "scale":
        a = p[0]
        v, g, h, dv = kids[0]
        return a * v, a * g, a * h, a * dv
    if k == "sum":
        return tuple(np.sum([kd[j] for kd in kids], axis=0) for j in range(4))
    v, g, h, dv = kids[0]
    for v2, g2, h2, dv2 in kids[1:]:
        outer = g[..., :, None] * g2[..., None, :]
        h = v[..., None, None] * h2 + v2[..., None, None] * h + outer + np.swapaxes(outer, -1, -2)
        g = v[..., None] * g2 + v2[..., None] * g
        dv = v * dv2 + v2 * dv
        v = v * v2
    return v, g, h, dv
