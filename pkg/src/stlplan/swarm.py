"""Communication graph and lockstep execution of the per-robot agents.

Robots exchange states only along edges of the communication graph, which
has an undirected edge for every predicate coupling two robots.  Each
descent runs in bulk-synchronous rounds: in round ``k`` every robot
publishes its iterate to its neighbours, waits for theirs, then steps.
Robots that have converged keep re-broadcasting their fixed state until no
robot in the swarm is moving.

Two executors implement the same protocol.  :class:`ThreadedExecutor` runs
one thread per robot with point-to-point queues and a barrier per round.
:class:`SequentialExecutor` drives the same generators round-robin in one
thread; both produce identical results and message logs.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .cost import PredicateExpr
from .descent import DescentGen, DescentOutcome, Outgoing


class ProtocolError(RuntimeError):
    """A round did not complete (deadlock or missing message)."""


class AgentFailure(RuntimeError):
    def __init__(self, robot: int, cause: BaseException):
        super().__init__(f"robot {robot} failed: {cause!r}")
        self.robot = robot
        self.cause = cause


@dataclass(frozen=True)
class CommGraph:
    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]  # (i, j) with i < j

    def neighbours(self, i: int) -> tuple[int, ...]:
        return tuple(sorted({b for a, b in self.edges if a == i} | {a for a, b in self.edges if b == i}))

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges


def build_graph(predicates: Iterable[PredicateExpr], robots: Iterable[int] = ()) -> CommGraph:
    preds = list(predicates)
    nodes = set(robots)
    edges = set()
    for p in preds:
        nodes |= p.owners
        if p.coupled:
            i, j = sorted(p.owners)
            edges.add((i, j))
    return CommGraph(tuple(sorted(nodes)), frozenset(edges))


@dataclass(frozen=True)
class RoundMessage:
    sender: int
    receiver: int
    j: int  # outer iteration
    k: int  # inner round
    state: np.ndarray


@dataclass
class DescentRun:
    outcomes: dict[int, DescentOutcome]
    neighbour_states: dict[int, dict[int, np.ndarray]]  # last round received by each robot
    rounds: int
    solve_time: dict[int, float]


@dataclass
class _Executor:
    graph: CommGraph
    timeout: float = 30.0
    log: list[tuple[int, int, int, int]] = field(default_factory=list)  # (j, k, sender, receiver)
    keep_log: bool = True

    def _record(self, j: int, k: int, sender: int, receivers: Iterable[int]):
        if self.keep_log:
            for r in receivers:
                self.log.append((j, k, sender, r))

    def exchange(self, payloads: Mapping[int, object], j: int) -> dict[int, dict[int, object]]:
        """One standalone round: every robot sends ``payloads[i]`` to its neighbours."""
        inbox: dict[int, dict[int, object]] = {i: {} for i in payloads}
        for i in sorted(payloads):
            nbrs = self.graph.neighbours(i)
            self._record(j, 0, i, nbrs)
            for n in nbrs:
                inbox[n][i] = payloads[i]
        return inbox

    def descend(self, gens: Mapping[int, DescentGen], j: int) -> DescentRun:
        raise NotImplementedError


class SequentialExecutor(_Executor):
    """Round-robin simulation of the lockstep protocol in a single thread."""

    def descend(self, gens, j):
        order = sorted(gens)
        solve = {i: 0.0 for i in order}
        outs: dict[int, Outgoing] = {}
        for i in order:
            t = time.perf_counter()
            outs[i] = _guard(i, lambda: next(gens[i]))
            solve[i] += time.perf_counter() - t
        results: dict[int, DescentOutcome] = {}
        received: dict[int, dict[int, np.ndarray]] = {}
        k = 0
        while len(results) < len(order):
            any_active = any(outs[i].active for i in order if i not in results)
            for i in order:
                self._record(j, k, i, self.graph.neighbours(i))
            inbox = {i: {n: outs[n].x for n in self.graph.neighbours(i)} for i in order}
            for i in order:
                received[i] = inbox[i]
                t = time.perf_counter()
                try:
                    outs[i] = _guard(i, lambda: gens[i].send((inbox[i], not any_active)))
                except StopIteration as stop:
                    results[i] = stop.value
                solve[i] += time.perf_counter() - t
            k += 1
        return DescentRun(results, received, k, solve)


def _guard(robot, fn):
    try:
        return fn()
    except StopIteration:
        raise
    except Exception as exc:  # noqa: BLE001 - reported with the robot id
        raise AgentFailure(robot, exc) from exc


class ThreadedExecutor(_Executor):
    """One thread per robot, point-to-point queues and a barrier per round."""

    def descend(self, gens, j):
        order = sorted(gens)
        chans = {(a, b): queue.SimpleQueue() for a in order for b in self.graph.neighbours(a)}
        active = dict.fromkeys(order, True)
        verdict = {"any_active": True}

        def tally():
            verdict["any_active"] = any(active.values())

        barrier = threading.Barrier(len(order), action=tally)
        log_lock = threading.Lock()
        logs: dict[int, list] = {i: [] for i in order}
        results: dict[int, DescentOutcome] = {}
        received: dict[int, dict[int, np.ndarray]] = {}
        solve = dict.fromkeys(order, 0.0)
        rounds = dict.fromkeys(order, 0)
        failures: list[BaseException] = []

        def worker(i: int):
            gen = gens[i]
            nbrs = self.graph.neighbours(i)
            try:
                t = time.perf_counter()
                out = next(gen)
                solve[i] += time.perf_counter() - t
                k = 0
                while True:
                    x = out.x.copy()
                    x.setflags(write=False)
                    for n in nbrs:
                        chans[(i, n)].put((i, k, x))
                    logs[i].extend((j, k, i, n) for n in nbrs)
                    active[i] = out.active
                    barrier.wait(self.timeout)
                    any_active = verdict["any_active"]
                    neigh = {}
                    for n in nbrs:
                        try:
                            sender, kk, xn = chans[(n, i)].get(timeout=self.timeout)
                        except queue.Empty:
                            raise ProtocolError(f"robot {i} missed the round-{k} state of robot {n}") from None
                        if sender != n or kk != k:
                            raise ProtocolError(f"robot {i} got round {kk} from {sender}, expected round {k} from {n}")
                        neigh[n] = xn
                    # second barrier: nobody sends round k+1 before all have read round k
                    barrier.wait(self.timeout)
                    received[i] = neigh
                    k += 1
                    t = time.perf_counter()
                    try:
                        out = gen.send((neigh, not any_active))
                    except StopIteration as stop:
                        solve[i] += time.perf_counter() - t
                        results[i] = stop.value
                        rounds[i] = k
                        return
                    solve[i] += time.perf_counter() - t
                    # a finished robot leaves; all robots finish on the same round
            except threading.BrokenBarrierError:
                with log_lock:
                    if not failures:
                        failures.append(ProtocolError(f"round barrier broken or timed out (robot {i})"))
            except BaseException as exc:  # noqa: BLE001
                with log_lock:
                    failures.insert(0, exc if isinstance(exc, ProtocolError) else AgentFailure(i, exc))
                barrier.abort()

        threads = [threading.Thread(target=worker, args=(i,), name=f"robot-{i}", daemon=True) for i in order]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if failures:
            raise failures[0]
        if self.keep_log:
            merged = [rec for i in order for rec in logs[i]]
            merged.sort(key=lambda r: (r[1], r[2], r[3]))
            self.log.extend(merged)
        return DescentRun(results, received, max(rounds.values(), default=0), solve)


def make_executor(graph: CommGraph, concurrent: bool = True, keep_log: bool = True) -> _Executor:
    cls = ThreadedExecutor if concurrent else SequentialExecutor
    return cls(graph, keep_log=keep_log)


def run(scenario, graph: CommGraph | None = None, concurrent: bool = True, keep_log: bool = True):
    """Plan ``scenario`` with one agent per robot; tries disjunction branches in order."""
    from .planner import plan_scenario

    return plan_scenario(scenario, graph=graph, concurrent=concurrent, keep_log=keep_log)
