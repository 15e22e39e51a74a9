"""Predicate evaluation and the per-robot penalty cost.

Robot ``i`` minimises ``F_i = sum(lam * 0.5 * max(0, h)^2)`` over the
predicates that involve its state.  A predicate touches one robot (own
constraint) or two robots (coupled constraint); both endpoints of a coupled
predicate share one :class:`PredicateExpr`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    EvaluationError,
    Expr,
    check_finite,
    compile_grad,
    compile_value,
    finite_difference_grad,
    is_vector,
    to_text,
)


class PredicateError(ValueError):
    pass


@dataclass(eq=False)
class PredicateExpr:
    """A predicate function ``h``; the predicate holds iff ``h <= 0``."""

    h: Expr
    dims: Mapping[int, int]
    owners: frozenset[int] = field(init=False)
    id: str = field(init=False)

    def __post_init__(self):
        self.owners = self.h.robots()
        if len(self.owners) > 2:
            raise PredicateError(
                f"predicate {to_text(self.h)} couples {len(self.owners)} robots; at most two are supported"
            )
        missing = [r for r in self.owners if r not in self.dims]
        if missing:
            raise PredicateError(f"predicate {to_text(self.h)} references undeclared robot x{missing[0]}")
        if is_vector(self.h, self.dims):
            raise PredicateError(f"predicate {to_text(self.h)} is vector valued; compare scalars")
        self.text = to_text(self.h)
        self.id = hashlib.sha1(self.text.encode()).hexdigest()[:12]
        self._value = compile_value(self.h)
        self._grads = {r: compile_grad(self.h, r, self.dims[r]) for r in self.owners}

    @property
    def coupled(self) -> bool:
        return len(self.owners) == 2

    def other(self, robot: int) -> int | None:
        rest = self.owners - {robot}
        return next(iter(rest)) if rest else None

    def __repr__(self):
        return f"PredicateExpr({self.text} <= 0)"


def eval_h(p: PredicateExpr, states: Mapping[int, np.ndarray], t: float) -> float:
    for r in p.owners:
        if r not in states:
            raise EvaluationError(f"missing state for robot {r}")
    return float(check_finite(p._value(states, t), p.text))


def eval_h_batch(p: PredicateExpr, states: Mapping[int, np.ndarray], times: np.ndarray) -> np.ndarray:
    """Vectorised ``eval_h``: ``states[r]`` has shape ``(T, d)``."""
    times = np.asarray(times, dtype=float)
    v = np.broadcast_to(p._value(states, times), times.shape)
    return check_finite(v, p.text)


def grad_h(
    p: PredicateExpr, states: Mapping[int, np.ndarray], t: float, robot: int, mode: str = "analytic"
) -> np.ndarray:
    """Gradient of ``h`` with respect to ``x<robot>``.

    ``mode="fd"`` uses central finite differences (step 1e-6) instead of
    forward-mode differentiation.
    """
    dim = p.dims[robot]
    if robot not in p.owners:
        return np.zeros(dim)
    if mode == "fd":
        return finite_difference_grad(p.h, states, t, robot)
    _, j = p._grads[robot](states, t)
    return check_finite(np.reshape(j, (dim,)), p.text)


@dataclass
class CostAssembly:
    robot: int
    terms: list[tuple[str, int, float]]  # (predicate id, activation, h)
    value: float
    gradient: np.ndarray

    @property
    def satisfied(self) -> bool:
        return self.value == 0.0


def assemble_Fi(
    i: int,
    predicates: Sequence[PredicateExpr],
    activations: Sequence[int],
    states: Mapping[int, np.ndarray],
    t: float,
    margin: float = 0.0,
) -> CostAssembly:
    """Penalty cost of robot ``i`` and its gradient.

    ``margin`` tightens every active predicate to ``h + margin <= 0``.
    """
    dim = len(np.atleast_1d(states[i]))
    value = 0.0
    grad = np.zeros(dim)
    terms = []
    for p, lam in zip(predicates, activations):
        if i not in p.owners:
            continue
        h = eval_h(p, states, t)
        terms.append((p.id, int(lam), h))
        if not lam:
            continue
        excess = h + margin
        if excess > 0:
            value += 0.5 * excess * excess
            grad += excess * grad_h(p, states, t, i)
    return CostAssembly(i, terms, value, grad)
