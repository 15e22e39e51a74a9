import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stlplan.cost import PredicateExpr, assemble_Fi
from stlplan.descent import DescentParams, distributed_optimisation
from stlplan.formula import parse, predicates
from stlplan.scenario import load_bundled


def preds_of(text, dims):
    return [PredicateExpr(p.h, dims) for p in predicates(parse(text))]


def params(eta=1e-3, max_iter=100, delta=0.1, lo=-10.0, hi=10.0, dim=1):
    return DescentParams(delta, eta, max_iter, np.full(dim, lo), np.full(dim, hi))


def test_feasible_start_returns_immediately():
    preds = preds_of("x1 <= 1", {1: 1})
    out = distributed_optimisation(1, [0.0], preds, [1], 0.0, params())
    assert out.iterations == 0 and out.x.tolist() == [0.0] and out.feasible and not out.restarted


def test_linear_contraction_converges():
    preds = preds_of("x1 <= 1", {1: 1})
    p = params(eta=1e-3)
    out = distributed_optimisation(1, [2.0], preds, [1], 0.0, p)
    assert out.feasible and not out.restarted
    # the excess over the tightened bound shrinks by 0.9 per step
    margin = p.margin
    expected = 0
    gap = 1.0 + margin
    while gap > margin / 2:
        gap *= 0.9
        expected += 1
    assert out.iterations == expected
    assert out.x[0] <= 1.0 - margin / 2 + 1e-12
    assert out.cost <= p.eta


def test_conflicting_predicates_restart_once():
    preds = preds_of("x1 <= 0 && x1 >= 1", {1: 1})
    out = distributed_optimisation(1, [0.5], preds, [1, 1], 0.0, params(max_iter=50), rng=np.random.default_rng(3))
    assert out.restarted and out.iterations == 50
    assert -10.0 <= out.x[0] <= 10.0


def test_inactive_predicates_are_ignored():
    preds = preds_of("x1 <= 0 && x1 >= 1", {1: 1})
    out = distributed_optimisation(1, [0.5], preds, [0, 1], 0.0, params())
    assert out.feasible and out.x[0] >= 1.0


def test_descent_is_deterministic():
    preds = preds_of("x1 <= 0 && x1 >= 1", {1: 1})
    runs = [
        distributed_optimisation(1, [0.5], preds, [1, 1], 0.0, params(max_iter=20), rng=np.random.default_rng(9))
        for _ in range(2)
    ]
    assert runs[0].x.tobytes() == runs[1].x.tobytes()


def test_zero_eta_is_allowed():
    preds = preds_of("x1 <= 1", {1: 1})
    out = distributed_optimisation(1, [3.0], preds, [1], 0.0, params(eta=0.0, max_iter=1000))
    assert out.feasible and out.cost == 0.0


def test_invalid_parameters():
    with pytest.raises(ValueError):
        DescentParams(0.0, 0.01, 10, np.zeros(1), np.ones(1))
    with pytest.raises(ValueError):
        DescentParams(0.1, 0.01, 0, np.zeros(1), np.ones(1))


@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 20), st.floats(-3, 3), st.floats(0.0, 0.05))
def test_feasible_return_bounds_every_active_predicate(x0, c, eta):
    preds = preds_of(f"x1 <= {c!r} && x1 >= {c - 2.0!r}", {1: 1})
    p = params(eta=eta, max_iter=2000, lo=-30, hi=30)
    out = distributed_optimisation(1, [x0], preds, [1, 1], 0.0, p)
    if out.feasible:
        c_ = assemble_Fi(1, preds, [1, 1], {1: out.x}, 0.0)
        bound = math.sqrt(2 * eta / len(preds))
        assert all(h <= bound for (_, _, h) in c_.terms)


def _scenario_predicates(name):
    sc = load_bundled(name)
    return sc, [PredicateExpr(p.h, sc.dims) for p in predicates(sc.formula)]


# The quadratic tether of the mixed case study has a gradient whose Lipschitz
# constant grows like 6|x2|^2, so a step of 0.1 overshoots far from the origin;
# there the property is checked with that term off, and with every term on at
# a step that satisfies the usual descent condition.
MONOTONE_CASES = [
    ("collision4", 0.1, False),
    ("rendezvous", 0.1, False),
    ("stability", 0.1, False),
    ("recurring", 0.1, False),
    ("swarm20", 0.1, False),
    ("overall", 0.1, True),
    ("overall", 1e-3, False),
]


@pytest.mark.parametrize("name, step, skip_quadratic", MONOTONE_CASES)
def test_cost_does_not_increase_with_neighbours_frozen(name, step, skip_quadratic):
    sc, preds = _scenario_predicates(name)
    lam = [0 if skip_quadratic and "^" in p.text else 1 for p in preds]
    rng = np.random.default_rng(5)
    for _ in range(10):
        states = {r.id: rng.uniform(r.lo, r.hi) for r in sc.robots}
        t = float(rng.uniform(0, 100))
        for r in sc.robots[:6]:
            x = states[r.id].copy()
            prev = assemble_Fi(r.id, preds, lam, {**states, r.id: x}, t).value
            for _ in range(30):
                c = assemble_Fi(r.id, preds, lam, {**states, r.id: x}, t)
                x = x - step * c.gradient
                now = assemble_Fi(r.id, preds, lam, {**states, r.id: x}, t).value
                assert now <= prev + 1e-12, (name, r.id)
                prev = now
