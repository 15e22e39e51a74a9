import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gen import random_formula, random_trace
from stlplan.expr import BinOp, Call, Const, Neg, Var
from stlplan.formula import (
    Always,
    And,
    Eventually,
    FormulaSyntaxError,
    IntervalError,
    Not,
    Or,
    Pred,
    TrueF,
    UnsupportedFormulaError,
    Until,
    build_satisfaction_tree,
    contains,
    enumerate_paths,
    parse,
    predicates,
    time_horizon,
    to_pnf,
    to_text_formula,
)
from stlplan.monitor import Trace, robustness

seeds = st.integers(0, 2**32 - 1)


def test_parse_always_maps_directly():
    f = parse("G[5,10](x1 - 3 <= 0)")
    assert f == Always(5.0, 10.0, Pred(BinOp("-", Var(1), Const(3.0))))


def test_parse_rendezvous_formula():
    f = parse("F[40,60](norm(x1 - x3) <= 1 && norm(x2 - x4) <= 1)")
    assert isinstance(f, Eventually) and (f.a, f.b) == (40.0, 60.0)
    assert isinstance(f.child, And) and len(f.child.children) == 2
    first = f.child.children[0]
    assert first.h == BinOp("-", Call("norm", BinOp("-", Var(1), Var(3))), Const(1.0))


def test_greater_equal_stores_reversed_difference():
    f = parse("x1 >= 2")
    assert f == Pred(BinOp("-", Const(2.0), Var(1)))


def test_strict_comparison_collapses_to_non_strict():
    assert parse("x1 < 2") == parse("x1 <= 2")
    assert parse("x1 > 2") == parse("x1 >= 2")


def test_interval_errors():
    with pytest.raises(IntervalError):
        parse("G[10,5](x1 <= 0)")
    with pytest.raises(IntervalError):
        parse("F[3,3](x1 <= 0)")


def test_syntax_error_reports_position():
    with pytest.raises(FormulaSyntaxError, match="line 1, column"):
        parse("G[1,5](x1 <= 0")


def test_conjunction_binds_tighter_than_disjunction():
    f = parse("x1 <= 0 || x2 <= 0 && x3 <= 0")
    assert isinstance(f, Or)
    assert isinstance(f.children[1], And)


def test_until_and_negation_parse():
    f = parse("!(x1 <= 0) U[0,3] (x2 >= 1)")
    assert isinstance(f, Until) and isinstance(f.left, Not)


def test_component_and_time_access():
    f = parse("abs(x3[0] - 50*exp(-0.1*t)) <= 0.05")
    assert {p.h.robots() for p in predicates(f)} == {frozenset({3})}


# -- positive normal form ----------------------------------------------------


def test_pnf_leaf_duality():
    assert to_pnf(Not(Pred(Var(1)))) == Pred(Neg(Var(1)))


def test_pnf_temporal_duality():
    f = to_pnf(Not(Always(1.0, 4.0, Pred(Var(1)))))
    assert f == Eventually(1.0, 4.0, Pred(Neg(Var(1))))


def test_pnf_mixed_example():
    h1, h2 = Var(1), Var(2)
    f = to_pnf(Not(And((Pred(h1), Always(0.0, 2.0, Pred(h2))))))
    assert f == Or((Pred(Neg(h1)), Eventually(0.0, 2.0, Pred(Neg(h2)))))


def test_pnf_double_negation_cancels():
    assert to_pnf(Not(Not(Pred(Var(1))))) == Pred(Var(1))


def test_pnf_rejects_negated_until():
    f = Not(Until(0.0, 1.0, Pred(Var(1)), Pred(Var(2))))
    with pytest.raises(UnsupportedFormulaError):
        to_pnf(f)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_pnf_idempotent_and_negation_free(seed):
    rng = np.random.default_rng(seed)
    f = random_formula(rng, depth=4, until=False)
    g = to_pnf(f)
    assert not contains(g, Not)
    assert to_pnf(g) == g


def test_pnf_preserves_robustness_sign():
    """1000 random formulas: the sign of the monitored robustness is unchanged."""
    rng = np.random.default_rng(20240611)
    checked = 0
    for _ in range(1000):
        f = random_formula(rng, depth=4, until=False)
        g = to_pnf(f)
        trace = Trace(random_trace(rng, 2, time_horizon(f)))
        r1, r2 = robustness(f, trace), robustness(g, trace)
        if abs(r1) > 1e-9:
            assert np.sign(r1) == np.sign(r2), to_text_formula(f)
            checked += 1
    assert checked > 900


# -- printing ------------------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_print_parse_round_trip(seed):
    rng = np.random.default_rng(seed)
    f = random_formula(rng, depth=4)
    assert parse(to_text_formula(f)) == f


# -- time horizon ----------------------------------------------------------------


@pytest.mark.parametrize(
    "text, th",
    [("x1 <= 0", 0.0), ("G[20,80](x1 <= 0)", 80.0), ("F[5,10]G[0,2](x1 <= 0)", 12.0), ("(x1 <= 0) U[1,4] (x2 <= 0)", 4.0)],
)
def test_time_horizon_examples(text, th):
    assert time_horizon(parse(text)) == th


@settings(max_examples=200, deadline=None)
@given(seeds, seeds)
def test_time_horizon_of_conjunction_is_max(s1, s2):
    f1 = random_formula(np.random.default_rng(s1), depth=3)
    f2 = random_formula(np.random.default_rng(s2), depth=3)
    assert time_horizon(And((f1, f2))) == max(time_horizon(f1), time_horizon(f2))


# -- paths and satisfaction tree -------------------------------------------------


def _example_formula():
    return parse("F[0,5](x1 <= 1 || G[0,2](x1 >= -1)) && G[0,10](F[0,5](x2 <= 1)) && G[0,20](x2 >= -1)")


def test_example_formula_has_four_paths():
    paths = enumerate_paths(_example_formula())
    assert len(paths) == 4
    shapes = [[type(n).__name__ for n in p.nodes[1:] if not isinstance(n, (And, Or))] for p in paths]
    assert shapes == [
        ["Eventually", "Pred"],
        ["Eventually", "Always", "Pred"],
        ["Always", "Eventually", "Pred"],
        ["Always", "Pred"],
    ]


def test_single_predicate_has_one_path():
    paths = enumerate_paths(parse("x1 <= 0"))
    assert len(paths) == 1 and paths[0].address == ()


def test_conjunction_of_predicates_has_two_paths():
    assert len(enumerate_paths(parse("x1 <= 0 && x2 <= 0"))) == 2


def test_nested_same_operator_flagged():
    (p,) = enumerate_paths(parse("G[1,10](G[0,2](x1 <= 0))"))
    assert p.nested_same
    (q,) = enumerate_paths(parse("G[1,10](F[0,2](x1 <= 0))"))
    assert not q.nested_same


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_path_count_equals_leaf_count(seed):
    f = to_pnf(random_formula(np.random.default_rng(seed), depth=4, until=False))
    paths = enumerate_paths(f)
    assert len(paths) == len(predicates(f))
    assert len({p.address for p in paths}) == len(paths)


def test_satisfaction_tree_of_example():
    tree = build_satisfaction_tree(_example_formula())
    # and, F, or, G under F, G, F under G, G
    assert len(tree.leaves) == 4
    assert len(tree.set_nodes()) == 7
    assert all(v == -1 for v in tree.tau.values())


def test_satisfaction_tree_single_leaf():
    tree = build_satisfaction_tree(parse("x1 <= 0"))
    assert tree.set_nodes() == []
    assert tree.root == -1


def test_satisfaction_tree_conjunction():
    tree = build_satisfaction_tree(parse("x1 <= 0 && x2 <= 0"))
    assert tree.tau[()] == -1 and len(tree.leaves) == 2


def test_true_constant_parses():
    assert parse("true") == TrueF()
