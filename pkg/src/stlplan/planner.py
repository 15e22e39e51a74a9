"""The sampling outer loop: trajectory trees, activations and satisfaction bookkeeping.

Every robot keeps a piecewise-linear trajectory (a path graph of vertices
sorted by time) that initially joins its start state to a final state at
``th(phi) + epsilon``.  Each outer iteration all robots draw the same random
instant ``t0``, interpolate their state there, switch on the predicates whose
validity domain contains ``t0``, run the distributed descent and splice the
result into their trajectory.  Satisfaction variables are then refreshed;
the loop stops once the root is satisfied.

Checks over intervals (``G`` nodes and any subformula evaluated at a recorded
instant) use sampled robustness: the minimum of ``-h`` over the union of
vertex times, segment midpoints and ``M`` evenly spaced instants.  Eventually
operators whose child contains temporal operators get an instant ``T*`` the
first time ``t0`` falls in their window; their child is then enforced around
that instant.
"""

from __future__ import annotations

import bisect
import hashlib
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .cost import PredicateExpr, eval_h_batch
from .descent import DescentParams, descent_rounds
from .formula import (
    Always,
    And,
    Eventually,
    Formula,
    Not,
    Or,
    PathRecord,
    Pred,
    TrueF,
    UnsupportedFormulaError,
    Until,
    build_satisfaction_tree,
    children,
    contains,
    enumerate_paths,
    predicates,
    subformula,
    time_horizon,
    to_pnf,
    to_text_formula,
)
from .expr import to_text
from .scenario import PlannerParams, RobotSpec, Scenario, ScenarioError
from .swarm import CommGraph, build_graph, make_executor
from .validity import (
    ChainOp,
    EventuallyState,
    Kind,
    ValidityDomain,
    chain_offset,
    compute_vd,
    pick_instant,
    record_eventually,
    reset_eventually_all,
    temporal_chain,
)

log = logging.getLogger(__name__)

TIME_EPS = 1e-9


class ConfigurationError(ScenarioError):
    pass


# --------------------------------------------------------------------------
# trajectory trees


@dataclass(frozen=True)
class Vertex:
    t: float
    x: np.ndarray


class RobotTree:
    """Vertices sorted by time; edges join consecutive vertices."""

    def __init__(self, start: Vertex, end: Vertex):
        if not end.t > start.t:
            raise ValueError("final time must exceed initial time")
        self.times: list[float] = [float(start.t), float(end.t)]
        self.states: list[np.ndarray] = [np.array(start.x, dtype=float), np.array(end.x, dtype=float)]
        self._arrays = None

    def __len__(self):
        return len(self.times)

    @property
    def vertices(self) -> list[Vertex]:
        return [Vertex(t, x) for t, x in zip(self.times, self.states)]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(k, k + 1) for k in range(len(self.times) - 1)]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._arrays is None:
            self._arrays = (np.array(self.times), np.array(self.states))
        return self._arrays

    def states_at(self, times) -> np.ndarray:
        ts, xs = self.arrays()
        times = np.asarray(times, dtype=float)
        return np.stack([np.interp(times, ts, xs[:, c]) for c in range(xs.shape[1])], axis=-1)

    def splice(self, index: int, v: Vertex):
        """Insert ``v`` between vertices ``index`` and ``index + 1``."""
        if not self.times[index] < v.t < self.times[index + 1]:
            raise ValueError(f"vertex time {v.t} does not fall inside edge {index}")
        self.times.insert(index + 1, float(v.t))
        self.states.insert(index + 1, np.array(v.x, dtype=float))
        self._arrays = None

    def check(self):
        ts = np.array(self.times)
        assert np.all(np.diff(ts) > 0), "vertex times must increase strictly"
        assert len(self.edges) == len(self.times) - 1

    def copy(self) -> "RobotTree":
        other = RobotTree.__new__(RobotTree)
        other.times = list(self.times)
        other.states = [x.copy() for x in self.states]
        other._arrays = None
        return other


def search_sort(tree: RobotTree, t0: float) -> int:
    """Index of the last vertex strictly before ``t0``."""
    if not tree.times[0] < t0 < tree.times[-1]:
        raise ValueError(f"t0={t0} outside ({tree.times[0]}, {tree.times[-1]})")
    k = bisect.bisect_left(tree.times, t0)
    if tree.times[k] == t0:
        raise ValueError(f"t0={t0} coincides with a vertex")
    return k - 1


def interpolate(tree: RobotTree, index: int, t0: float) -> Vertex:
    t1, t2 = tree.times[index], tree.times[index + 1]
    x1, x2 = tree.states[index], tree.states[index + 1]
    return Vertex(t0, (x2 - x1) / (t2 - t1) * (t0 - t1) + x1)


# --------------------------------------------------------------------------
# disjunction branching


def branch_disjunctions(f: Formula, limit: int | None = None) -> list[Formula]:
    """All disjunction-free alternatives of a PNF formula, left to right."""

    def expand(g: Formula) -> list[Formula]:
        if isinstance(g, (Pred, TrueF)):
            return [g]
        if isinstance(g, Not):
            return [Not(c) for c in expand(g.child)]
        if isinstance(g, Or):
            return [alt for c in g.children for alt in expand(c)]
        if isinstance(g, And):
            return [And(tuple(combo)) for combo in itertools.product(*(expand(c) for c in g.children))]
        if isinstance(g, Always):
            return [Always(g.a, g.b, c) for c in expand(g.child)]
        if isinstance(g, Eventually):
            return [Eventually(g.a, g.b, c) for c in expand(g.child)]
        if isinstance(g, Until):
            return [Until(g.a, g.b, l, r) for l, r in itertools.product(expand(g.left), expand(g.right))]
        raise TypeError(g)

    out = expand(f)
    if limit is not None and len(out) > limit:
        raise ConfigurationError(f"formula expands into {len(out)} disjunction branches (limit {limit})")
    return out


# --------------------------------------------------------------------------
# branch structure


@dataclass
class Leaf:
    address: tuple[int, ...]
    path: PathRecord
    ops: list[ChainOp]
    pred: PredicateExpr | None  # None for ``true``

    @property
    def reporter(self) -> int | None:
        return min(self.pred.owners) if self.pred and self.pred.owners else None

    @property
    def text(self) -> str:
        return "true" if self.pred is None else f"{to_text(self.pred.h)} <= 0"


@dataclass
class EventuallyOp:
    op: ChainOp
    path: PathRecord  # any path through the operator
    compound: bool  # child holds temporal operators: an instant is picked
    terminal: bool  # no always operator above it


class BranchModel:
    """Static structure of one disjunction-free branch."""

    def __init__(self, formula: Formula, dims: Mapping[int, int]):
        if contains(formula, Or):
            raise ConfigurationError("branch still contains a disjunction")
        if contains(formula, Until):
            raise UnsupportedFormulaError("the planner does not support until; use the monitor for such formulas")
        if contains(formula, Not):
            raise ConfigurationError("branch is not in positive normal form")
        self.formula = formula
        self.th = time_horizon(formula)
        self.paths = enumerate_paths(formula)
        self.leaves: list[Leaf] = []
        self.fops: dict[tuple[int, ...], EventuallyOp] = {}
        for p in self.paths:
            ops = temporal_chain(p)
            pred = PredicateExpr(p.leaf.h, dims) if isinstance(p.leaf, Pred) else None
            self.leaves.append(Leaf(p.address, p, ops, pred))
            seen_g = False
            for idx, op in enumerate(ops):
                if op.kind == "G":
                    seen_g = True
                    continue
                compound = idx < len(ops) - 1
                prev = self.fops.get(op.address)
                if prev is None:
                    self.fops[op.address] = EventuallyOp(op, p, compound, not seen_g)
                elif compound and not prev.compound:
                    self.fops[op.address] = EventuallyOp(op, p, True, prev.terminal)
        self.predicates = [lf.pred for lf in self.leaves if lf.pred is not None]


# --------------------------------------------------------------------------
# sampled robustness


class SampledRobustness:
    """Robustness of subformulas from leaf signals sampled on a time grid.

    ``leaf_h(address, times)`` returns ``h`` of the leaf at ``address``.
    Interval extrema are taken over the grid points inside the interval plus
    its end points.
    """

    def __init__(self, formula: Formula, leaf_h: Callable[[tuple, np.ndarray], np.ndarray], grid: np.ndarray):
        self.formula = formula
        self.leaf_h = leaf_h
        self.grid = np.unique(np.asarray(grid, dtype=float))

    def at(self, address: tuple[int, ...], times, extra: np.ndarray | None = None) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return self._rho(subformula(self.formula, address), address, times, extra)

    def _rho(self, node, addr, times, extra):
        if isinstance(node, TrueF):
            return np.full(times.shape, np.inf)
        if isinstance(node, Pred):
            return -self.leaf_h(addr, times)
        if isinstance(node, And):
            return np.min([self._rho(c, addr + (i,), times, extra) for i, c in enumerate(node.children)], axis=0)
        if isinstance(node, (Always, Eventually)):
            lo, hi = times.min() + node.a, times.max() + node.b
            pts = [times + node.a, times + node.b, self.grid[(self.grid >= lo) & (self.grid <= hi)]]
            if extra is not None:
                pts.append(extra[(extra >= lo) & (extra <= hi)])
            ctimes = np.unique(np.concatenate(pts))
            vals = self._rho(node.child, addr + (0,), ctimes, None)
            starts = np.searchsorted(ctimes, times + node.a - TIME_EPS, "left")
            ends = np.searchsorted(ctimes, times + node.b + TIME_EPS, "right")
            reduce = np.min if isinstance(node, Always) else np.max
            return np.array([reduce(vals[s:e]) for s, e in zip(starts, ends)])
        raise UnsupportedFormulaError(f"no sampled robustness for {type(node).__name__}")


def satisfaction_variable(node: Formula, t0: float, robustness: Callable[[], float]) -> tuple[int, float | None]:
    """Satisfaction variable of a set node once its child path holds at ``t0``.

    Returns ``(tau, t_star)``; ``t_star`` is only set for eventually nodes.
    ``robustness`` computes the sampled robustness of an always node.
    """
    if isinstance(node, Eventually):
        return 1, t0
    if isinstance(node, Always):
        return (1 if robustness() >= 0 else -1), None
    if isinstance(node, And):
        return 1, None
    raise TypeError(f"{type(node).__name__} is not a set node")


# --------------------------------------------------------------------------
# robot agents


class RobotAgent:
    """Planner state owned by one robot: its trajectory and copies of its neighbours'."""

    def __init__(self, spec: RobotSpec, tree: RobotTree, predicates: Sequence[PredicateExpr], neighbours: Sequence[int]):
        self.spec = spec
        self.id = spec.id
        self.tree = tree
        self.predicates = [p for p in predicates if self.id in p.owners]
        self.neighbours = tuple(neighbours)
        self.mirrors: dict[int, RobotTree] = {}
        self._cache: dict[int, tuple[np.ndarray, dict[int, np.ndarray]]] = {}

    def trajectory_of(self, robot: int) -> RobotTree:
        return self.tree if robot == self.id else self.mirrors[robot]

    def setup_mirrors(self, inbox: Mapping[int, tuple[Vertex, Vertex]]):
        for n, (start, end) in inbox.items():
            self.mirrors[n] = RobotTree(start, end)

    def clear_cache(self):
        self._cache.clear()

    def leaf_h(self, pred: PredicateExpr, times: np.ndarray) -> np.ndarray:
        key = id(times)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not times:
            hit = (times, {})
            self._cache[key] = hit
        states = hit[1]
        for r in pred.owners:
            if r not in states:
                states[r] = self.trajectory_of(r).states_at(times)
        return eval_h_batch(pred, states, times)

    def splice(self, index: int, t0: float, x: np.ndarray, neighbour_states: Mapping[int, np.ndarray]):
        self.tree.splice(index, Vertex(t0, x))
        for n, xn in neighbour_states.items():
            self.mirrors[n].splice(index, Vertex(t0, xn))
        self.clear_cache()


# --------------------------------------------------------------------------
# planning one branch


@dataclass
class PathStatus:
    address: tuple[int, ...]
    predicate: str
    vd: tuple[float, float] | None
    kind: str
    tau: int


@dataclass
class BranchResult:
    success: bool
    branch_index: int
    branch_text: str
    trees: dict[int, RobotTree]
    tau: dict[tuple[int, ...], int]
    paths: list[PathStatus]
    t_star: dict[tuple[int, ...], float | None]
    iterations: int
    resets: int
    rejected: int
    wall_time: float
    max_solve_time: float
    idle: int = 0  # samples where nothing was active
    unsatisfied: list[str] = field(default_factory=list)
    message_log: list[tuple[int, int, int, int]] = field(default_factory=list)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) & 0xFFFFFFFF for k in key])


def _key(ids: Sequence[str]) -> int:
    return int.from_bytes(hashlib.sha1("|".join(sorted(ids)).encode()).digest()[:4], "big")


def final_states(scenario: Scenario) -> dict[int, np.ndarray]:
    """Given or randomly drawn (shared seed) final states."""
    out = {}
    for r in scenario.robots:
        out[r.id] = r.xf if r.xf is not None else _rng(scenario.params.seed, 7919, r.id).uniform(r.lo, r.hi)
    return out


class BranchPlanner:
    def __init__(self, scenario: Scenario, branch: Formula, branch_index: int, executor, graph: CommGraph):
        self.scenario = scenario
        self.params: PlannerParams = scenario.params
        self.model = BranchModel(branch, scenario.dims)
        self.branch_index = branch_index
        self.executor = executor
        self.graph = graph
        self.tf = self.model.th + self.params.epsilon
        xf = final_states(scenario)
        self.agents: dict[int, RobotAgent] = {}
        for r in scenario.robots:
            tree = RobotTree(Vertex(0.0, r.x0), Vertex(self.tf, xf[r.id]))
            self.agents[r.id] = RobotAgent(r, tree, self.model.predicates, graph.neighbours(r.id))
        # neighbours learn each other's end points through one exchange round
        inbox = executor.exchange({i: (a.tree.vertices[0], a.tree.vertices[-1]) for i, a in self.agents.items()}, -1)
        for i, a in self.agents.items():
            a.setup_mirrors(inbox[i])
        self.ev = EventuallyState.for_formula(branch)
        self.sat = build_satisfaction_tree(branch)
        self.rejected = 0
        self.idle = 0
        self.solve_time: dict[int, float] = {}
        self._leaf_by_addr = {lf.address: lf for lf in self.model.leaves}
        self._active_group = None
        self._reset_rho: dict[tuple[int, ...], float] = {}

    # -- helpers ------------------------------------------------------------

    @property
    def times(self) -> list[float]:
        return next(iter(self.agents.values())).tree.times

    def leaf_h(self, address, times) -> np.ndarray:
        leaf = self._leaf_by_addr[address]
        if leaf.pred is None:
            return np.full(np.shape(times), -np.inf)
        if not leaf.pred.owners:
            return eval_h_batch(leaf.pred, {}, times)
        return self.agents[leaf.reporter].leaf_h(leaf.pred, times)

    def robustness(self, span: tuple[float, float] | None = None) -> SampledRobustness:
        ts = np.array(self.times)
        grid = np.concatenate([ts, 0.5 * (ts[1:] + ts[:-1])])
        if span is not None:
            grid = np.concatenate([grid, np.linspace(span[0], span[1], self.params.M)])
        return SampledRobustness(self.model.formula, self.leaf_h, grid)

    def _sample_t0(self, iteration: int) -> float:
        rng = _rng(self.params.seed, self.branch_index, iteration, 0)
        ts = self.times
        while True:
            t0 = float(rng.uniform(0.0, self.tf))
            k = bisect.bisect_left(ts, t0)
            near = [ts[i] for i in (k - 1, k) if 0 <= i < len(ts)]
            if 0.0 < t0 < self.tf and all(abs(t0 - s) > TIME_EPS for s in near):
                return t0

    def _deactivated(self, leaf: Leaf) -> bool:
        for op in leaf.ops:
            if op.kind == "F" and self.model.fops[op.address].terminal and self.ev[op.address].tau == 1:
                return True
        return False

    # -- one outer iteration ---------------------------------------------------

    def validity_domains(self) -> dict[tuple[int, ...], ValidityDomain]:
        return {lf.address: compute_vd(lf.path, self.model.formula, self.ev) for lf in self.model.leaves}

    def select_activations(self, vds, t0: float, iteration: int) -> dict[tuple[int, ...], int]:
        lam = {}
        groups: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
        guarded: list[tuple[int, ...]] = []
        g = self.params.guard
        for lf in self.model.leaves:
            vd = vds[lf.address]
            lam[lf.address] = 0
            if lf.pred is None or self._deactivated(lf):
                continue
            if vd.kind is Kind.G_COVERED:
                if vd.contains(t0):
                    lam[lf.address] = 1
                elif vd.lo - g <= t0 <= vd.hi + g:
                    guarded.append(lf.address)
            elif vd.contains(t0):
                groups.setdefault(vd.owner, []).append(lf.address)
        if groups:
            owners = sorted(groups)
            if len(owners) > 1:
                ids = [self._leaf_by_addr[a].pred.id for o in owners for a in groups[o]]
                pick = owners[int(_rng(self.params.seed, self.branch_index, iteration, 2, _key(ids)).integers(len(owners)))]
            else:
                pick = owners[0]
            for a in groups[pick]:
                lam[a] = 1
            self._active_group = pick
        else:
            self._active_group = None
        self._guarded = guarded
        return lam

    def _pick_instants(self, t0: float):
        for addr in sorted(self.model.fops, key=len):
            fop = self.model.fops[addr]
            if not fop.compound or (fop.terminal and self.ev[addr].tau == 1):
                continue
            pick_instant(fop.path, addr, t0, self.ev)

    def _descend(self, lam, index: int, t0: float, iteration: int):
        acts = [lam[lf.address] for lf in self.model.leaves if lf.pred is not None]
        gens = {}
        for rid, agent in self.agents.items():
            spec = agent.spec
            x_inter = interpolate(agent.tree, index, t0).x
            dparams = DescentParams(self.params.delta, self.params.eta, self.params.Lprime, spec.lo, spec.hi)
            rng = _rng(self.params.seed, self.branch_index, iteration, 1, rid)
            gens[rid] = descent_rounds(rid, x_inter, self.model.predicates, acts, t0, dparams, rng)
        run = self.executor.descend(gens, iteration)
        for rid, s in run.solve_time.items():
            self.solve_time[rid] = self.solve_time.get(rid, 0.0) + s
        return run

    def step(self, iteration: int, j: int) -> bool:
        t0 = self._sample_t0(iteration)
        for a in self.agents.values():
            a.clear_cache()
        self._pick_instants(t0)
        vds = self.validity_domains()
        lam = self.select_activations(vds, t0, iteration)
        index = search_sort(self.agents[1].tree, t0)
        run = None
        if self._guarded:
            # just outside a window: also hold the window's constraints so the
            # segment leaving it does not cut through; dropped if infeasible
            wide = {**lam, **dict.fromkeys(self._guarded, 1)}
            run = self._descend(wide, index, t0, iteration)
            if any(o.restarted for o in run.outcomes.values()):
                run = None
        if run is None:
            if not any(lam.values()):
                # nothing to enforce at t0: the vertex would lie on the current segment
                self.idle += 1
                self._record_eventually(t0, lam)
                return self.update_root()
            run = self._descend(lam, index, t0, iteration)
        if any(o.restarted for o in run.outcomes.values()):
            # some robot could not reach a feasible state: keep the trajectories unchanged
            self.rejected += 1
            log.debug("iteration %d: descent failed at t0=%.4f, vertex discarded", iteration, t0)
        else:
            for rid, agent in self.agents.items():
                agent.splice(index, t0, run.outcomes[rid].x, run.neighbour_states.get(rid, {}))
        self._record_eventually(t0, lam)
        return self.update_root()

    def _record_eventually(self, t0: float, lam):
        for addr in sorted(self.model.fops, key=len):
            fop = self.model.fops[addr]
            entry = self.ev[addr]
            if fop.terminal and entry.tau == 1:
                continue
            off = chain_offset(fop.path, addr, self.ev)
            if off is None:
                continue
            if entry.T_star is not None:
                anchor = off + entry.t_star + entry.T_star
            elif not fop.compound and self._active_group == addr:
                anchor = t0
            else:
                continue
            if self._child_robustness(addr, anchor) >= 0:
                record_eventually(fop.path, addr, anchor, self.ev)

    def reset_eventually(self):
        """Periodic reset of the eventually operators.

        An instant picked for a compound eventually operator survives the
        reset while the robustness of its child there keeps improving from
        one reset to the next; otherwise it is drawn again.
        """
        keep = set()
        for addr, fop in self.model.fops.items():
            entry = self.ev[addr]
            off = chain_offset(fop.path, addr, self.ev)
            if not fop.compound or entry.T_star is None or off is None:
                continue
            rho = self._child_robustness(addr, off + entry.t_star + entry.T_star)
            if rho > self._reset_rho.get(addr, -np.inf):
                keep.add(addr)
            self._reset_rho[addr] = rho
        saved = {a: (self.ev[a].t_star, self.ev[a].T_star) for a in keep}
        reset_eventually_all(self.ev)
        for a, (t_star, T_star) in saved.items():
            self.ev[a].t_star, self.ev[a].T_star = t_star, T_star
        for a in self.model.fops:
            if a not in keep:
                self._reset_rho.pop(a, None)

    # -- satisfaction tree ----------------------------------------------------

    def update_root(self) -> bool:
        f = self.model.formula
        tau = self.sat.tau
        for a in tau:
            tau[a] = -1

        def fill(addr, value):
            node = subformula(f, addr)
            if addr in tau:
                if isinstance(node, Eventually) and addr in self.ev.entries:
                    tau[addr] = 1 if value == 1 else self.ev[addr].tau
                else:
                    tau[addr] = value
            for i, _ in enumerate(children(node)):
                fill(addr + (i,), value)

        def skeleton(addr) -> int:
            node = subformula(f, addr)
            if isinstance(node, TrueF):
                val = 1
            elif isinstance(node, Pred):
                rho = -self.leaf_h(addr, self._span_grid(0.0, self.model.th))
                val = 1 if float(rho.min()) >= 0 else -1
            elif isinstance(node, And):
                vals = [skeleton(addr + (i,)) for i in range(len(node.children))]
                val = 1 if all(v == 1 for v in vals) else -1
                tau[addr] = val
                return val
            elif isinstance(node, Always):
                r = self.robustness((node.a, node.b))
                val, _ = satisfaction_variable(node, 0.0, lambda: float(r.at(addr, 0.0)[0]))
            elif isinstance(node, Eventually):
                entry = self.ev[addr]
                if entry.tau == 1:
                    ok = self._child_robustness(addr, entry.last) >= 0
                    if not ok:
                        # the recorded instant no longer holds: search the original window again
                        entry.tau, entry.t_star, entry.T_star, entry.last = -1, 0.0, None, None
                    val = 1 if ok else -1
                else:
                    val = -1
            else:
                raise UnsupportedFormulaError(type(node).__name__)
            fill(addr, val)
            return val

        if isinstance(f, Pred):
            rho = -self.leaf_h((), self._span_grid(0.0, self.model.th))
            root = 1 if float(rho.min()) >= 0 else -1
            tau[()] = root
            return root == 1
        return skeleton(()) == 1

    def _child_robustness(self, addr, anchor: float) -> float:
        # directly nested eventually operators are merged into one window,
        # so the anchor belongs to the first child below the chain
        caddr = addr + (0,)
        child = subformula(self.model.formula, caddr)
        while isinstance(child, Eventually):
            caddr += (0,)
            child = child.child
        span = (anchor, anchor + time_horizon(child))
        return float(self.robustness(span).at(caddr, anchor)[0])

    def _span_grid(self, lo: float, hi: float) -> np.ndarray:
        ts = np.array(self.times)
        mids = 0.5 * (ts[1:] + ts[:-1])
        pts = np.concatenate([ts, mids, np.linspace(lo, hi, self.params.M)])
        return np.unique(pts[(pts >= lo) & (pts <= hi)])

    # -- main loop ----------------------------------------------------------

    def run(self) -> BranchResult:
        start = time.perf_counter()
        j = 0
        resets = 0
        iteration = 0
        success = False
        while True:
            success = self.step(iteration, j)
            iteration += 1
            if success:
                break
            j += 1
            if j == self.params.L:
                j = 0
                resets += 1
                self.reset_eventually()
                log.info("branch %d: %d iterations without success, eventually operators reset", self.branch_index, iteration)
                if resets >= self.params.budget:
                    break
        return self._result(success, iteration, resets, time.perf_counter() - start)

    def _result(self, success, iterations, resets, wall) -> BranchResult:
        vds = self.validity_domains()
        statuses = []
        for lf in self.model.leaves:
            vd = vds.get(lf.address)
            owner_tau = self._path_tau(lf)
            statuses.append(
                PathStatus(lf.address, lf.text, (vd.lo, vd.hi) if vd else None, vd.kind.value if vd else "-", owner_tau)
            )
        unsatisfied = [
            to_text_formula(subformula(self.model.formula, a)) for a, v in sorted(self.sat.tau.items()) if v != 1
        ]
        t_star = {}
        for addr in self.model.fops:
            e = self.ev[addr]
            t_star[addr] = e.last
        return BranchResult(
            success=success,
            branch_index=self.branch_index,
            branch_text=to_text_formula(self.model.formula),
            trees={i: a.tree for i, a in self.agents.items()},
            tau=dict(self.sat.tau),
            paths=statuses,
            t_star=t_star,
            iterations=iterations,
            resets=resets,
            rejected=self.rejected,
            idle=self.idle,
            wall_time=wall,
            max_solve_time=max(self.solve_time.values(), default=0.0),
            unsatisfied=unsatisfied,
        )

    def _path_tau(self, lf: Leaf) -> int:
        """Variable of the outermost non-conjunction node on the path."""
        for prefix, node in zip(lf.path.prefixes(), lf.path.nodes):
            if not isinstance(node, And):
                return self.sat.tau.get(prefix, -1)
        return -1


# --------------------------------------------------------------------------
# entry points


@dataclass
class PlanResult:
    success: bool
    branch: BranchResult | None
    attempts: list[BranchResult]
    graph: CommGraph
    message_log: list[tuple[int, int, int, int]]

    @property
    def trees(self) -> dict[int, RobotTree]:
        return self.branch.trees if self.branch else {}


def plan(scenario: Scenario, branch: Formula, executor, graph: CommGraph, branch_index: int = 0) -> BranchResult:
    return BranchPlanner(scenario, branch, branch_index, executor, graph).run()


def plan_scenario(
    scenario: Scenario,
    graph: CommGraph | None = None,
    concurrent: bool = True,
    keep_log: bool = True,
    executor=None,
) -> PlanResult:
    """Try the disjunction branches in order; ``executor`` overrides the default runtime."""
    f = to_pnf(scenario.formula)
    branches = branch_disjunctions(f, scenario.params.max_branches)
    if graph is None:
        preds = [PredicateExpr(p.h, scenario.dims) for p in predicates(f)]
        graph = build_graph(preds, scenario.dims)
    if executor is None:
        executor = make_executor(graph, concurrent, keep_log)
    attempts = []
    for k, b in enumerate(branches):
        res = plan(scenario, b, executor, graph, k)
        attempts.append(res)
        log.info("branch %d/%d: %s after %d iterations", k + 1, len(branches), "success" if res.success else "failure", res.iterations)
        if res.success:
            return PlanResult(True, res, attempts, graph, executor.log)
    return PlanResult(False, attempts[-1] if attempts else None, attempts, graph, executor.log)


