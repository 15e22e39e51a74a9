import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gen import eventually_addresses, random_formula, vd_oracle
from stlplan.formula import UnsupportedFormulaError, enumerate_paths, parse, time_horizon, to_pnf
from stlplan.validity import (
    EventuallyState,
    Kind,
    compute_vd,
    pick_instant,
    record_eventually,
    reset_eventually_all,
)


def vd_of(text, **entries):
    """Single-path formula; ``entries`` maps 'root'/'inner' to (t*, T*)."""
    f = parse(text)
    ev = EventuallyState.for_formula(f)
    addr = {"root": (), "inner": (0,)}
    for name, (ts, Ts) in entries.items():
        ev[addr[name]].t_star, ev[addr[name]].T_star = ts, Ts
    (path,) = enumerate_paths(f)
    return compute_vd(path, f, ev)


def test_always_over_predicate():
    vd = vd_of("G[5,10](x1 <= 0)")
    assert (vd.kind, vd.lo, vd.hi) == (Kind.G_COVERED, 5.0, 10.0)


def test_eventually_always_with_picked_instant():
    vd = vd_of("F[5,10](G[0,2](x1 <= 0))", root=(0.0, 7.0))
    assert (vd.kind, vd.lo, vd.hi) == (Kind.G_COVERED, 7.0, 9.0)


def test_always_eventually_is_a_point():
    vd = vd_of("G[2,10](F[0,5](x1 <= 0))", inner=(0.0, 1.0))
    assert (vd.kind, vd.lo, vd.hi) == (Kind.F_SAMPLED, 3.0, 3.0)
    assert vd.is_point


def test_nested_always_merges_windows():
    vd = vd_of("G[1,10](G[0,2](x1 <= 0))")
    assert (vd.kind, vd.lo, vd.hi) == (Kind.G_COVERED, 1.0, 12.0)


def test_bare_predicate_covers_horizon():
    f = parse("x1 <= 0 && G[0,4](x2 <= 0)")
    ev = EventuallyState.for_formula(f)
    vd = compute_vd(enumerate_paths(f)[0], f, ev)
    assert (vd.kind, vd.lo, vd.hi) == (Kind.G_COVERED, 0.0, 4.0)
    assert vd.owner is None


def test_unsampled_eventually_offers_its_window():
    vd = vd_of("F[5,10](x1 <= 0)")
    assert (vd.kind, vd.lo, vd.hi) == (Kind.F_SAMPLED, 5.0, 10.0)
    assert vd.owner == ()


def test_until_has_no_domain():
    f = parse("(x1 <= 0) U[0,2] (x2 <= 0)")
    with pytest.raises(UnsupportedFormulaError):
        compute_vd(enumerate_paths(f)[0], f, EventuallyState())


# -- eventually bookkeeping ------------------------------------------------------


def _single_f():
    f = parse("F[5,10](x1 <= 0)")
    (path,) = enumerate_paths(f)
    return f, path, EventuallyState.for_formula(f)


def test_record_sets_t_star():
    _, path, ev = _single_f()
    record_eventually(path, (), 7.0, ev)
    assert ev[()].t_star == 7.0 and ev[()].tau == 1


def test_last_record_wins():
    _, path, ev = _single_f()
    record_eventually(path, (), 7.0, ev)
    record_eventually(path, (), 8.0, ev)
    assert ev[()].t_star == 8.0


def test_record_outside_window_rejected():
    _, path, ev = _single_f()
    with pytest.raises(ValueError):
        record_eventually(path, (), 12.0, ev)
    assert ev[()].t_star == 0.0 and ev[()].tau == -1


def test_reset_clears_eventually_state():
    _, path, ev = _single_f()
    record_eventually(path, (), 7.0, ev)
    reset_eventually_all(ev)
    assert (ev[()].t_star, ev[()].tau, ev[()].T_star) == (0.0, -1, None)
    before = ev.copy()
    reset_eventually_all(ev)
    assert ev == before


def test_reset_touches_only_eventually_nodes():
    f = parse("G[0,10](F[0,5](x1 <= 0)) && F[0,3](x2 <= 0)")
    ev = EventuallyState.for_formula(f)
    assert set(ev.entries) == {(0, 0), (1,)}
    ev[(1,)].tau, ev[(1,)].t_star = 1, 2.0
    reset_eventually_all(ev)
    assert all(e.tau == -1 and e.t_star == 0.0 for e in ev.entries.values())


def test_pick_instant_only_inside_window():
    f = parse("F[5,10](G[0,2](x1 <= 0))")
    (path,) = enumerate_paths(f)
    ev = EventuallyState.for_formula(f)
    assert not pick_instant(path, (), 3.0, ev)
    assert pick_instant(path, (), 6.5, ev)
    assert ev[()].T_star == 6.5
    assert not pick_instant(path, (), 8.0, ev)  # already picked


# -- fuzzing against the independent recursion -------------------------------------


def _random_state(rng, f):
    entries = {}
    for addr in eventually_addresses(f):
        node = f
        for i in addr:
            node = node.children[i] if hasattr(node, "children") else node.child
        a, b = node.a, node.b
        while type(node.child) is type(node):  # merged window
            node = node.child
            a, b = a + node.a, b + node.b
        t_star = 0.0 if rng.random() < 0.5 else float(rng.uniform(a, b))
        T_star = None if rng.random() < 0.3 else float(rng.uniform(a, b))
        entries[addr] = (t_star, T_star)
    return entries


def test_compute_vd_matches_oracle_on_1000_formulas():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        f = to_pnf(random_formula(rng, depth=3, until=False))
        entries = _random_state(rng, f)
        ev = EventuallyState.for_formula(f)
        for addr, (ts, Ts) in entries.items():
            ev[addr].t_star, ev[addr].T_star = ts, Ts
        th = time_horizon(f)
        for path in enumerate_paths(f):
            vd = compute_vd(path, f, ev)
            kind, lo, hi = vd_oracle(f, path.address, entries, th)
            assert (vd.kind.value, vd.lo, vd.hi) == (kind, lo, hi), (f, path.address)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_domains_stay_inside_horizon(seed):
    """With t* = 0 and every T* inside its window, domains lie in [0, th]."""
    rng = np.random.default_rng(seed)
    f = to_pnf(random_formula(rng, depth=3, until=False))
    ev = EventuallyState.for_formula(f)
    for addr, (_, Ts) in _random_state(rng, f).items():
        ev[addr].T_star = Ts
    th = time_horizon(f)
    for path in enumerate_paths(f):
        vd = compute_vd(path, f, ev)
        assert 0.0 <= vd.lo <= vd.hi <= th + 1e-9


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kind_follows_leaf_parent(seed):
    rng = np.random.default_rng(seed)
    f = to_pnf(random_formula(rng, depth=3, until=False))
    ev = EventuallyState.for_formula(f)
    for path in enumerate_paths(f):
        temporal = [n for n in path.nodes[:-1] if type(n).__name__ in ("Always", "Eventually")]
        vd = compute_vd(path, f, ev)
        if temporal and type(temporal[-1]).__name__ == "Eventually":
            assert vd.kind is Kind.F_SAMPLED
        elif temporal and all(type(n).__name__ == "Always" for n in temporal):
            assert vd.kind is Kind.G_COVERED
