import time
from dataclasses import dataclass

import pytest

from gen import AuditLog
from stlplan.cost import PredicateExpr
from stlplan.formula import predicates, to_pnf
from stlplan.monitor import Trace, satisfies
from stlplan.planner import plan_scenario
from stlplan.scenario import load_bundled
from stlplan.swarm import ThreadedExecutor, build_graph

# criterion label -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@dataclass
class BundledRun:
    scenario: object
    result: object
    report: object
    audit: AuditLog
    wall: float


_RUNS: dict[str, BundledRun] = {}


def run_bundled(name: str) -> BundledRun:
    """Plan a bundled scenario once per session with the threaded runtime."""
    if name not in _RUNS:
        sc = load_bundled(name)
        preds = [PredicateExpr(p.h, sc.dims) for p in predicates(to_pnf(sc.formula))]
        graph = build_graph(preds, sc.dims)
        executor = ThreadedExecutor(graph)
        executor.log = AuditLog(graph)
        start = time.perf_counter()
        result = plan_scenario(sc, graph=graph, executor=executor)
        wall = time.perf_counter() - start
        report = satisfies(sc.formula, Trace.from_trees(result.trees)) if result.branch else None
        _RUNS[name] = BundledRun(sc, result, report, executor.log, wall)
    return _RUNS[name]


@pytest.fixture(scope="session")
def bundled():
    return run_bundled


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
