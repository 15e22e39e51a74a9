"""Per-robot gradient descent on the penalty cost with neighbour exchange.

The descent is written as a generator so that one protocol implementation
serves both the threaded swarm runtime and a single-threaded round-robin
simulation.  Each ``yield`` hands out the robot's current iterate and whether
it is still moving, and receives the neighbours' iterates for that round
plus a flag that is set once no robot in the swarm moved in that round.

The iterate follows ``x <- x - delta * grad F`` where the cost is evaluated
with every active predicate tightened by ``margin = sqrt(2 * eta)``.  The
loop stops once every active predicate satisfies ``h <= -margin / 2``, so a
feasible return has ``F == 0`` on the untightened predicates.  After
``max_iter`` steps without success the robot jumps to a uniformly random
state of its workspace and stops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Generator, Mapping, Sequence

import numpy as np

from .cost import PredicateExpr, assemble_Fi

JITTER = 1e-9


@dataclass(frozen=True)
class DescentParams:
    delta: float
    eta: float
    max_iter: int
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("step size must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @property
    def margin(self) -> float:
        return max(math.sqrt(2.0 * self.eta), 1e-6)


@dataclass
class DescentOutcome:
    x: np.ndarray
    cost: float
    iterations: int
    restarted: bool
    feasible: bool


@dataclass(frozen=True)
class Outgoing:
    x: np.ndarray
    active: bool


DescentGen = Generator[Outgoing, tuple[Mapping[int, np.ndarray], bool], DescentOutcome]


def descent_rounds(
    robot: int,
    x0,
    predicates: Sequence[PredicateExpr],
    activations: Sequence[int],
    t: float,
    params: DescentParams,
    rng: np.random.Generator,
) -> DescentGen:
    x = np.array(x0, dtype=float)
    preds = [p for p, lam in zip(predicates, activations) if lam and robot in p.owners]
    ones = [1] * len(preds)
    stop_margin = params.margin / 2.0
    k = 0
    done = not preds
    restarted = False

    def states(neigh):
        s = dict(neigh)
        s[robot] = x
        return s

    reply = yield Outgoing(x.copy(), not done)
    while True:
        neigh, final = reply
        if final:
            break
        if not done:
            s = states(neigh)
            if assemble_Fi(robot, preds, ones, s, t, stop_margin).value == 0.0:
                done = True
            elif k >= params.max_iter:
                x = rng.uniform(params.lo, params.hi)
                restarted = True
                done = True
            else:
                c = assemble_Fi(robot, preds, ones, s, t, params.margin)
                if not np.any(c.gradient):
                    # zero gradient at positive cost: singular norm
                    x = x + rng.uniform(-JITTER, JITTER, size=x.shape)
                else:
                    x = x - params.delta * c.gradient
                k += 1
        reply = yield Outgoing(x.copy(), not done)
    final_cost = assemble_Fi(robot, preds, ones, states(neigh), t).value
    return DescentOutcome(x, final_cost, k, restarted, final_cost <= params.eta)


def run_rounds(gen: DescentGen, exchange: Callable[[Outgoing], tuple[Mapping[int, np.ndarray], bool]]) -> DescentOutcome:
    """Drive one robot's descent.

    ``exchange(out)`` publishes this robot's outgoing state and returns the
    neighbours' states for the round together with a flag telling whether any
    robot in the swarm is still moving.
    """
    out = next(gen)
    while True:
        neigh, any_active = exchange(out)
        try:
            out = gen.send((neigh, not any_active))
        except StopIteration as stop:
            return stop.value


def distributed_optimisation(
    robot: int,
    x0,
    predicates: Sequence[PredicateExpr],
    activations: Sequence[int],
    t: float,
    params: DescentParams,
    exchange: Callable[[Outgoing], tuple[Mapping[int, np.ndarray], bool]] | None = None,
    rng: np.random.Generator | None = None,
) -> DescentOutcome:
    """Run the descent for one robot.

    Without ``exchange`` the robot is treated as isolated (no neighbours).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    gen = descent_rounds(robot, x0, predicates, activations, t, params, rng)
    if exchange is None:
        exchange = lambda out: ({}, out.active)  # noqa: E731
    return run_rounds(gen, exchange)
