"""Scalar/vector expressions over robot states and time.

Predicate functions are small expression trees.  A robot state ``x<i>`` is a
vector (a scalar when the robot is one-dimensional), ``x<i>[k]`` selects one
component and ``t`` is time.  Trees are evaluated either at one instant or in
batch over an array of instants, and differentiated in forward mode with
respect to one robot's state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np


class EvaluationError(ValueError):
    """Raised when an expression cannot be evaluated to a finite number."""


class Expr:
    __slots__ = ()

    def robots(self) -> frozenset[int]:
        return frozenset().union(*(c.robots() for c in self.children()))

    def children(self) -> tuple["Expr", ...]:
        return ()

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    robot: int

    def robots(self):
        return frozenset((self.robot,))


@dataclass(frozen=True, eq=True)
class Comp(Expr):
    robot: int
    index: int

    def robots(self):
        return frozenset((self.robot,))


@dataclass(frozen=True, eq=True)
class Time(Expr):
    pass


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class BinOp(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


FUNCTIONS = ("norm", "abs", "exp", "sin", "cos", "sqrt")


@dataclass(frozen=True, eq=True)
class Call(Expr):
    fn: str
    arg: Expr

    def children(self):
        return (self.arg,)


def to_text(e: Expr) -> str:
    """Fully parenthesised text that the formula parser reads back verbatim."""
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return f"x{e.robot}"
    if isinstance(e, Comp):
        return f"x{e.robot}[{e.index}]"
    if isinstance(e, Time):
        return "t"
    if isinstance(e, Neg):
        return f"-({to_text(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


def is_vector(e: Expr, dims: Mapping[int, int]) -> bool:
    """Static shape check: True if ``e`` evaluates to a vector."""
    if isinstance(e, Var):
        return dims.get(e.robot, 1) > 1
    if isinstance(e, (Const, Comp, Time)):
        return False
    if isinstance(e, Neg):
        return is_vector(e.arg, dims)
    if isinstance(e, BinOp):
        lv, rv = is_vector(e.left, dims), is_vector(e.right, dims)
        if e.op == "^" and rv:
            raise EvaluationError("exponent must be scalar")
        if e.op in "*/" and lv and rv:
            raise EvaluationError(f"'{e.op}' of two vectors is not defined")
        return lv or rv
    if isinstance(e, Call):
        inner = is_vector(e.arg, dims)
        if e.fn == "norm":
            return False
        return inner
    raise TypeError(e)


# --------------------------------------------------------------------------
# evaluation

States = Mapping[int, np.ndarray]


def _lift(a, b):
    # batch mode: a (T,) scalar against a (T,d) vector needs a trailing axis
    if a.ndim < b.ndim and a.ndim >= 1:
        return a[..., None], b
    if b.ndim < a.ndim and b.ndim >= 1:
        return a, b[..., None]
    return a, b


def _state(states: States, robot: int) -> np.ndarray:
    try:
        x = states[robot]
    except KeyError:
        raise EvaluationError(f"missing state for robot {robot}") from None
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 1:
        return x[..., 0]
    return x


def compile_value(e: Expr) -> Callable[[States, object], np.ndarray]:
    """Compile ``e`` into ``f(states, t)``.

    ``states[i]`` has shape ``(d,)`` for a single instant or ``(T, d)`` for a
    batch, in which case ``t`` has shape ``(T,)``.
    """
    if isinstance(e, Const):
        v = float(e.value)
        return lambda s, t: np.asarray(v)
    if isinstance(e, Var):
        r = e.robot
        return lambda s, t: _state(s, r)
    if isinstance(e, Comp):
        r, k = e.robot, e.index

        def comp(s, t):
            try:
                x = np.asarray(s[r], dtype=float)
            except KeyError:
                raise EvaluationError(f"missing state for robot {r}") from None
            if k >= x.shape[-1]:
                raise EvaluationError(f"x{r}[{k}] out of range for dimension {x.shape[-1]}")
            return x[..., k]

        return comp
    if isinstance(e, Time):
        return lambda s, t: np.asarray(t, dtype=float)
    if isinstance(e, Neg):
        f = compile_value(e.arg)
        return lambda s, t: -f(s, t)
    if isinstance(e, BinOp):
        fl, fr = compile_value(e.left), compile_value(e.right)
        op = _BINARY[e.op]

        def binop(s, t):
            a, b = _lift(fl(s, t), fr(s, t))
            return op(a, b)

        return binop
    if isinstance(e, Call):
        f = compile_value(e.arg)
        if e.fn == "norm":

            def norm(s, t):
                v = f(s, t)
                # a vector has one more axis than the time array
                if v.ndim > np.ndim(t):
                    return np.sqrt(np.sum(v * v, axis=-1))
                return np.abs(v)

            return norm
        fn = _UNARY[e.fn]
        return lambda s, t: fn(f(s, t))
    raise TypeError(e)


def _safe_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return a / b


def _safe_pow(a, b):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.power(a, b)


def _safe_sqrt(a):
    with np.errstate(invalid="ignore"):
        return np.sqrt(a)


_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": _safe_div,
    "^": _safe_pow,
}
_UNARY = {"abs": np.abs, "exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": _safe_sqrt}


# --------------------------------------------------------------------------
# forward-mode differentiation


def compile_grad(e: Expr, robot: int, dim: int):
    """Compile ``e`` into ``f(states, t) -> (value, jacobian)``.

    The jacobian is taken with respect to ``x<robot>`` (dimension ``dim``) and
    has shape ``value.shape + (dim,)``.  Single instants only.
    """
    zero = np.zeros(dim)
    eye = np.eye(dim)

    def build(n: Expr):
        if isinstance(n, Const):
            v = np.asarray(float(n.value))
            return lambda s, t: (v, zero)
        if isinstance(n, Var):
            r = n.robot
            if r == robot:
                if dim == 1:
                    return lambda s, t: (_state(s, r), eye[0])

                return lambda s, t: (_state(s, r), eye)

            def other(s, t):
                x = _state(s, r)
                return x, np.zeros(x.shape + (dim,))

            return other
        if isinstance(n, Comp):
            val = compile_value(n)
            if n.robot == robot:
                row = eye[n.index] if n.index < dim else zero
                return lambda s, t: (val(s, t), row)
            return lambda s, t: (val(s, t), zero)
        if isinstance(n, Time):
            return lambda s, t: (np.asarray(float(t)), zero)
        if isinstance(n, Neg):
            f = build(n.arg)

            def neg(s, t):
                v, j = f(s, t)
                return -v, -j

            return neg
        if isinstance(n, BinOp):
            fl, fr = build(n.left), build(n.right)
            op = n.op

            def binop(s, t):
                a, ja = fl(s, t)
                b, jb = fr(s, t)
                if op == "+":
                    return a + b, ja + jb
                if op == "-":
                    return a - b, ja - jb
                if op == "*":
                    return a * b, a[..., None] * jb + b[..., None] * ja
                if op == "/":
                    with np.errstate(divide="ignore", invalid="ignore"):
                        v = a / b
                        j = (ja * b[..., None] - a[..., None] * jb) / (b * b)[..., None]
                    return v, j
                # power
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    v = np.power(a, b)
                    j = (b * np.power(a, b - 1.0))[..., None] * ja
                    if np.any(jb != 0):
                        j = j + (v * np.log(a))[..., None] * jb
                return v, j

            return binop
        if isinstance(n, Call):
            f = build(n.arg)
            fn = n.fn

            def call(s, t):
                v, j = f(s, t)
                if fn == "norm" and v.ndim == 1:
                    nv = float(np.sqrt(v @ v))
                    if nv == 0.0:
                        # singular point; defined as a zero gradient
                        return np.asarray(0.0), np.zeros(j.shape[-1])
                    return np.asarray(nv), (v / nv) @ j
                if fn in ("norm", "abs"):
                    return np.abs(v), np.sign(v)[..., None] * j
                if fn == "exp":
                    ev = np.exp(v)
                    return ev, ev[..., None] * j
                if fn == "sin":
                    return np.sin(v), np.cos(v)[..., None] * j
                if fn == "cos":
                    return np.cos(v), -np.sin(v)[..., None] * j
                if fn == "sqrt":
                    with np.errstate(invalid="ignore", divide="ignore"):
                        r = np.sqrt(v)
                        return r, (0.5 / r)[..., None] * j
                raise EvaluationError(f"unknown function {fn}")

            return call
        raise TypeError(n)

    return build(e)


def check_finite(value, what: str = "expression"):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"{what} evaluated to a non-finite value")
    return arr


def simplify_neg(e: Expr) -> Expr:
    """Negate ``e``, folding double negation and literals."""
    if isinstance(e, Neg):
        return e.arg
    if isinstance(e, Const):
        return Const(-e.value)
    return Neg(e)


def constant_value(e: Expr) -> float | None:
    if isinstance(e, Const):
        return float(e.value)
    return None


def finite_difference_grad(e: Expr, states: States, t: float, robot: int, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar expression."""
    f = compile_value(e)
    x = np.asarray(states[robot], dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        hi = dict(states)
        lo = dict(states)
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        hi[robot], lo[robot] = xp, xm
        g[k] = (float(f(hi, t)) - float(f(lo, t))) / (2 * step)
    return g

