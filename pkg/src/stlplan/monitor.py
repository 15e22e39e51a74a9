"""Quantitative STL monitor over piecewise-linear multi-robot traces.

Robustness follows the usual recursive semantics with ``rho(h <= 0) = -h``:
conjunction is a minimum, disjunction a maximum, negation flips the sign,
``G`` and ``F`` take the infimum and supremum over their window and ``U``
combines both.  Interval extrema are computed over the union of the trace
breakpoints, a grid of spacing ``delta`` and the window end points.  For
predicates that are affine in the states and in ``t`` the value is linear on
every segment, so this is exact for them; otherwise it is exact up to the
grid resolution.

This module shares only the formula syntax tree and expression compiler with
the planner; its interval logic is separate on purpose so it can serve as an
independent check of planner output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .expr import compile_value, to_text
from .formula import (
    Always,
    And,
    Eventually,
    Formula,
    Not,
    Or,
    Pred,
    TrueF,
    Until,
    children,
    robots,
    time_horizon,
    to_text_formula,
)

TOLERANCE = 1e-6
DEFAULT_DELTA = 0.05
_EPS = 1e-9


class TraceError(ValueError):
    pass


class Trace:
    """Per-robot ``(times, states)`` samples joined by straight lines."""

    def __init__(self, samples: Mapping[int, tuple[np.ndarray, np.ndarray]]):
        self.samples: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for rid, (times, states) in samples.items():
            times = np.asarray(times, dtype=float)
            states = np.asarray(states, dtype=float)
            if states.ndim == 1:
                states = states[:, None]
            if times.ndim != 1 or len(times) < 1 or states.shape[0] != len(times):
                raise TraceError(f"robot {rid}: times and states do not line up")
            if np.any(np.diff(times) <= 0):
                raise TraceError(f"robot {rid}: times must increase strictly")
            self.samples[int(rid)] = (times, states)
        if not self.samples:
            raise TraceError("empty trace")

    @classmethod
    def from_trees(cls, trees) -> "Trace":
        return cls({rid: tree.arrays() for rid, tree in trees.items()})

    @property
    def start(self) -> float:
        return max(t[0] for t, _ in self.samples.values())

    @property
    def end(self) -> float:
        return min(t[-1] for t, _ in self.samples.values())

    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([t for t, _ in self.samples.values()]))

    def states_at(self, times: np.ndarray, which=None) -> dict[int, np.ndarray]:
        out = {}
        for rid in self.samples if which is None else which:
            if rid not in self.samples:
                raise TraceError(f"trace has no robot {rid}")
            ts, xs = self.samples[rid]
            out[rid] = np.column_stack([np.interp(times, ts, xs[:, c]) for c in range(xs.shape[1])])
        return out


class _RangeTable:
    """Sparse table answering min or max over index ranges in O(1)."""

    def __init__(self, values: np.ndarray, op):
        self.op = op
        self.levels = [values]
        width = 1
        while 2 * width <= len(values):
            prev = self.levels[-1]
            self.levels.append(op(prev[: len(prev) - width], prev[width:]))
            width *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Extremum over ``values[lo..hi]`` inclusive; empty ranges give NaN."""
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        span = hi - lo + 1
        out = np.full(lo.shape, np.nan)
        ok = span > 0
        if np.any(ok):
            k = np.floor(np.log2(span[ok])).astype(int)
            res = np.empty(k.shape)
            for level in np.unique(k):
                sel = k == level
                table = self.levels[level]
                a = lo[ok][sel]
                b = hi[ok][sel] - (1 << level) + 1
                res[sel] = self.op(table[a], table[b])
            out[ok] = res
        return out


@dataclass
class NodeReport:
    address: tuple[int, ...]
    text: str
    rho: float
    time: float  # worst instant (G, predicates) or witness (F)


@dataclass
class PredicateExtrema:
    text: str
    h_min: float
    h_max: float
    t_at_max: float


@dataclass
class RobustnessReport:
    formula: str
    rho: float
    verdict: bool
    delta: float
    tolerance: float = TOLERANCE
    nodes: list[NodeReport] = field(default_factory=list)
    predicates: list[PredicateExtrema] = field(default_factory=list)

    def format(self) -> str:
        def num(v):
            return "+inf" if v == math.inf else ("-inf" if v == -math.inf else f"{v:.6g}")

        lines = [
            f"formula: {self.formula}",
            f"robustness: {num(self.rho)}",
            f"verdict: {'satisfied' if self.verdict else 'violated'} (tolerance {self.tolerance:g})",
            f"resolution: {self.delta:g} s (exact on linear segments for affine predicates)",
            "subformulas:",
        ]
        for n in self.nodes:
            addr = ".".join(map(str, n.address)) or "root"
            lines.append(f"  [{addr}] rho={num(n.rho)} at t={n.time:.6g}  {n.text}")
        lines.append("predicates (raw h over [0, th]):")
        for p in self.predicates:
            lines.append(f"  max h={num(p.h_max)} at t={p.t_at_max:.6g}, min h={num(p.h_min)}  {p.text}")
        return "\n".join(lines)


class _Monitor:
    def __init__(self, trace: Trace, delta: float):
        if not delta > 0:
            raise ValueError("resolution must be positive")
        self.trace = trace
        self.delta = delta
        self.base = trace.breakpoints()
        self._compiled: dict[int, object] = {}

    def grid(self, lo: float, hi: float) -> np.ndarray:
        n = int(math.floor((hi - lo) / self.delta + _EPS))
        pts = lo + self.delta * np.arange(n + 1)
        inside = self.base[(self.base > lo) & (self.base < hi)]
        return np.unique(np.concatenate([pts, inside, [lo, hi]]))

    def h(self, pred: Pred, times: np.ndarray) -> np.ndarray:
        fn = self._compiled.get(id(pred))
        if fn is None:
            fn = self._compiled[id(pred)] = compile_value(pred.h)
        states = self.trace.states_at(times, sorted(pred.h.robots()))
        return np.broadcast_to(np.asarray(fn(states, times), dtype=float), times.shape).copy()

    def rho(self, f: Formula, times: np.ndarray) -> np.ndarray:
        if isinstance(f, TrueF):
            return np.full(times.shape, np.inf)
        if isinstance(f, Pred):
            return -self.h(f, times)
        if isinstance(f, Not):
            return -self.rho(f.child, times)
        if isinstance(f, And):
            return np.minimum.reduce([self.rho(c, times) for c in f.children])
        if isinstance(f, Or):
            return np.maximum.reduce([self.rho(c, times) for c in f.children])
        if isinstance(f, (Always, Eventually)):
            return self._window(f, times)
        if isinstance(f, Until):
            return self._until(f, times)
        raise TypeError(f"unknown formula node {type(f).__name__}")

    def _support(self, times: np.ndarray, lo_off: float, hi_off: float) -> np.ndarray:
        """Evaluation points covering every window ``[t + lo_off, t + hi_off]``."""
        lo, hi = times.min() + lo_off, times.max() + hi_off
        return np.unique(np.concatenate([self.grid(lo, hi), times + lo_off, times + hi_off]))

    def _window(self, f, times):
        pts = self._support(times, f.a, f.b)
        vals = self.rho(f.child, pts)
        table = _RangeTable(vals, np.minimum if isinstance(f, Always) else np.maximum)
        lo = np.searchsorted(pts, times + f.a - _EPS, "left")
        hi = np.searchsorted(pts, times + f.b + _EPS, "right") - 1
        return table.query(lo, hi)

    def _until(self, f: Until, times):
        pts = self._support(times, 0.0, f.b)
        left = self.rho(f.left, pts)
        right = self.rho(f.right, pts)
        out = np.empty(times.shape)
        for n, t in enumerate(times):
            i0 = np.searchsorted(pts, t - _EPS, "left")
            ia = np.searchsorted(pts, t + f.a - _EPS, "left")
            ib = np.searchsorted(pts, t + f.b + _EPS, "right")
            hold = np.minimum.accumulate(left[i0:ib])
            cand = np.minimum(right[ia:ib], hold[ia - i0 :])
            out[n] = cand.max() if len(cand) else -np.inf
        return out

    def extreme_time(self, f, t: float) -> tuple[float, float]:
        """Robustness of ``f`` at ``t`` and the instant that decides it."""
        value = float(self.rho(f, np.array([t]))[0])
        if isinstance(f, (Always, Eventually)):
            pts = self._support(np.array([t]), f.a, f.b)
            pts = pts[(pts >= t + f.a - _EPS) & (pts <= t + f.b + _EPS)]
            vals = self.rho(f.child, pts)
            k = int(np.argmin(vals) if isinstance(f, Always) else np.argmax(vals))
            return value, float(pts[k])
        return value, t


def _skeleton(f: Formula, addr=()):
    """Nodes reached from the root through boolean connectives only, plus those connectives' operands."""
    yield addr, f
    if isinstance(f, (And, Or)):
        for i, c in enumerate(children(f)):
            yield from _skeleton(c, addr + (i,))


def _leaves(f: Formula):
    if isinstance(f, Pred):
        yield f
    for c in children(f):
        yield from _leaves(c)


def _check_trace(f: Formula, trace: Trace, t: float):
    need = time_horizon(f) + t
    if trace.end + _EPS < need:
        raise TraceError(f"trace ends at {trace.end:g} s but the formula needs [0, {need:g}] s")
    if trace.start > t + _EPS:
        raise TraceError(f"trace starts at {trace.start:g} s, after t={t:g}")
    missing = sorted(set(robots(f)) - set(trace.samples))
    if missing:
        raise TraceError(f"trace has no samples for robot(s) {missing}")


def robustness(f: Formula, trace: Trace, t: float = 0.0, delta: float = DEFAULT_DELTA) -> float:
    _check_trace(f, trace, t)
    return float(_Monitor(trace, delta).rho(f, np.array([float(t)]))[0])


def satisfies(f: Formula, trace: Trace, delta: float = DEFAULT_DELTA) -> RobustnessReport:
    _check_trace(f, trace, 0.0)
    mon = _Monitor(trace, delta)
    rho = float(mon.rho(f, np.array([0.0]))[0])
    nodes = []
    for addr, node in _skeleton(f):
        value, when = mon.extreme_time(node, 0.0)
        nodes.append(NodeReport(addr, to_text_formula(node), value, when))
    th = time_horizon(f)
    grid = mon.grid(0.0, max(th, 0.0)) if th > 0 else np.array([0.0])
    preds = []
    seen = set()
    for p in _leaves(f):
        text = f"{to_text(p.h)} <= 0"
        if text in seen:
            continue
        seen.add(text)
        h = mon.h(p, grid)
        k = int(np.argmax(h))
        preds.append(PredicateExtrema(text, float(h.min()), float(h[k]), float(grid[k])))
    return RobustnessReport(to_text_formula(f), rho, rho >= -TOLERANCE, delta, TOLERANCE, nodes, preds)
