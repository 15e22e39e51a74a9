"""Command line entry point: ``stlplan plan | monitor | plot``.

Exit codes: 0 success, 1 specification not satisfied (planner budget spent
or monitor verdict false), 2 invalid input, 3 runtime failure.  Set
``STLPLAN_LOG`` to a logging level name (``INFO``, ``DEBUG``) for progress
messages on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .formula import FormulaError, parse, to_pnf, to_text_formula
from .monitor import DEFAULT_DELTA, Trace, TraceError, satisfies
from .scenario import ScenarioError, load_scenario, read_trajectory, write_trajectory
from .swarm import AgentFailure, ProtocolError

EXIT_OK, EXIT_UNSAT, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("stlplan")


def _setup_logging():
    level = os.environ.get("STLPLAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


# --------------------------------------------------------------------------
# plan


def satisfaction_report(result, scenario, n_branches: int) -> str:
    b = result.branch
    lines = [
        f"scenario: {scenario.name}",
        f"formula: {to_text_formula(scenario.formula)}",
        f"status: {'satisfied' if result.success else 'not satisfied'}",
        f"branch: {b.branch_index + 1} of {n_branches}",
        f"branch formula: {b.branch_text}",
        f"tau(root) = {b.tau.get((), -1):+d}",
        "paths:",
    ]
    for p in b.paths:
        addr = ".".join(map(str, p.address)) or "root"
        vd = "-" if p.vd is None else (f"{p.vd[0]:.6g}" if p.vd[0] == p.vd[1] else f"[{p.vd[0]:.6g}, {p.vd[1]:.6g}]")
        lines.append(f"  [{addr}] tau={p.tau:+d} vd={vd} ({p.kind})  {p.predicate}")
    lines.append("eventually operators (t* = recorded satisfaction instant):")
    if not b.t_star:
        lines.append("  none")
    for addr, t in sorted(b.t_star.items()):
        name = ".".join(map(str, addr)) or "root"
        lines.append(f"  [{name}] t* = {'unset' if t is None else f'{t:.6g}'}")
    if b.unsatisfied:
        lines.append("unsatisfied nodes:")
        lines.extend(f"  {u}" for u in b.unsatisfied)
    for other in result.attempts:
        if other is not b:
            lines.append(f"branch {other.branch_index + 1} failed after {other.iterations} iterations: {other.branch_text}")
    return "\n".join(lines) + "\n"


def cmd_plan(scenario_path, out_dir, concurrent: bool = True, message_log: bool = False) -> int:
    from .planner import ConfigurationError, branch_disjunctions, plan_scenario

    try:
        scenario = load_scenario(scenario_path)
        n_branches = len(branch_disjunctions(to_pnf(scenario.formula), scenario.params.max_branches))
    except (ScenarioError, FormulaError, ConfigurationError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        result = plan_scenario(scenario, concurrent=concurrent, keep_log=message_log)
    except FormulaError as exc:
        return _fail(EXIT_INPUT, str(exc))
    except (ProtocolError, AgentFailure) as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    wall = time.perf_counter() - start
    b = result.branch
    header = {
        "scenario": scenario.name,
        "scenario-hash": scenario.digest(),
        "seed": scenario.params.seed,
        "formula": to_text_formula(scenario.formula),
        "branch": b.branch_text,
        "status": "satisfied" if result.success else "not satisfied",
    }
    write_trajectory(out / "trajectory.txt", b.trees, header)
    report = satisfaction_report(result, scenario, n_branches)
    (out / "report.txt").write_text(report)
    metrics = {
        "success": result.success,
        "branch": b.branch_index,
        "branches": n_branches,
        "iterations": sum(a.iterations for a in result.attempts),
        "resets": b.resets,
        "rejected": b.rejected,
        "idle": b.idle,
        "vertices": {str(i): len(t) for i, t in sorted(b.trees.items())},
        "wall_time_s": wall,
        "max_robot_solve_time_s": max(a.max_solve_time for a in result.attempts),
        "edges": sorted(list(e) for e in result.graph.edges),
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    if message_log:
        with open(out / "messages.txt", "w") as fh:
            fh.write("# j k sender receiver\n")
            for rec in result.message_log:
                fh.write(" ".join(map(str, rec)) + "\n")
    print(report, end="")
    print(f"wall time {wall:.3f} s, max per-robot solve time {metrics['max_robot_solve_time_s']:.4f} s")
    return EXIT_OK if result.success else EXIT_UNSAT


# --------------------------------------------------------------------------
# monitor


def read_formula(path) -> str:
    path = Path(path)
    if path.suffix in (".yaml", ".yml"):
        return load_scenario(path).formula_text
    lines = [ln for ln in path.read_text().splitlines() if not ln.lstrip().startswith("#")]
    return " ".join(lines).strip()


def load_trace(path) -> tuple[Trace, dict]:
    data = read_trajectory(path)
    return Trace(data.robots), data.header


def cmd_monitor(traj_path, formula_path, delta: float = DEFAULT_DELTA) -> int:
    try:
        f = parse(read_formula(formula_path))
        trace, _ = load_trace(traj_path)
        report = satisfies(f, trace, delta)
    except (FormulaError, ScenarioError, TraceError, OSError, ValueError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    print(report.format())
    return EXIT_OK if report.verdict else EXIT_UNSAT


# --------------------------------------------------------------------------
# plot


def _windows(formula_text: str | None) -> list[tuple[float, float]]:
    if not formula_text:
        return []
    from .formula import enumerate_paths
    from .validity import EventuallyState, compute_vd

    try:
        f = to_pnf(parse(formula_text))
        ev = EventuallyState.for_formula(f)
        spans = {(vd.lo, vd.hi) for vd in (compute_vd(p, f, ev) for p in enumerate_paths(f))}
    except FormulaError:
        return []
    return sorted(s for s in spans if s[1] > s[0])


def _pairs(formula_text: str | None) -> list[tuple[int, int]]:
    if not formula_text:
        return []
    from .formula import predicates

    try:
        f = parse(formula_text)
    except FormulaError:
        return []
    return sorted({tuple(sorted(p.h.robots())) for p in predicates(f) if len(p.h.robots()) == 2})


def cmd_plot(traj_path, out_path) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    try:
        trace, header = load_trace(traj_path)
    except (ScenarioError, TraceError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    formula = header.get("formula")
    windows = _windows(formula)
    pairs = _pairs(formula)
    dim = max(xs.shape[1] for _, xs in trace.samples.values())
    show_pairs = 0 < len(pairs) <= 6
    n_panels = dim + (len(pairs) if show_pairs else 0)
    fig, axes = plt.subplots(n_panels, 1, figsize=(8, 2.6 * n_panels), sharex=True, squeeze=False)
    axes = axes[:, 0]
    t_end = trace.end

    def shade(ax):
        for lo, hi in windows:
            ax.axvspan(lo, hi, color="tab:gray", alpha=0.12, lw=0)

    for c in range(dim):
        ax = axes[c]
        shade(ax)
        for rid, (ts, xs) in sorted(trace.samples.items()):
            if c < xs.shape[1]:
                ax.plot(ts, xs[:, c], lw=1.2, label=f"robot {rid}")
        ax.set_ylabel(f"x[{c}]" if dim > 1 else "x")
        if len(trace.samples) <= 10:
            ax.legend(loc="upper right", fontsize="small", ncol=2)
    if show_pairs:
        grid = np.union1d(trace.breakpoints(), np.linspace(0.0, t_end, 2001))
        grid = grid[grid <= t_end]
        states = trace.states_at(grid)
        for k, (i, j) in enumerate(pairs):
            ax = axes[dim + k]
            shade(ax)
            ax.plot(grid, np.linalg.norm(states[i] - states[j], axis=1), color="tab:purple", lw=1.2)
            ax.set_ylabel(f"|x{i} - x{j}|")
    axes[-1].set_xlabel("t [s]")
    if formula:
        fig.suptitle(formula if len(formula) < 110 else formula[:107] + "...", fontsize="small")
    fig.tight_layout()
    try:
        fig.savefig(out_path, format=Path(out_path).suffix.lstrip(".") or "svg")
    except (OSError, ValueError) as exc:
        plt.close(fig)
        return _fail(EXIT_INPUT, str(exc))
    plt.close(fig)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stlplan", description="Distributed STL trajectory planning for robot teams.")
    sub = ap.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("plan", help="plan trajectories for a scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sequential", action="store_true", help="simulate the robots in one thread")
    p.add_argument("--message-log", action="store_true", help="also write every exchanged message")
    m = sub.add_parser("monitor", help="check a trajectory file against a formula")
    m.add_argument("trajectory")
    m.add_argument("formula", help="file holding the formula text (or a scenario file)")
    m.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="time resolution in seconds")
    g = sub.add_parser("plot", help="draw a trajectory file")
    g.add_argument("trajectory")
    g.add_argument("--out", required=True, help="output image (svg, pdf or png)")
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.verb == "plan":
        return cmd_plan(args.scenario, args.out, not args.sequential, args.message_log)
    if args.verb == "monitor":
        return cmd_monitor(args.trajectory, args.formula, args.delta)
    return cmd_plot(args.trajectory, args.out)


if __name__ == "__main__":
    sys.exit(main())
