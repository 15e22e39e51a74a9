import json
import re
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from stlplan.cli import EXIT_INPUT, EXIT_OK, EXIT_UNSAT, main
from stlplan.planner import RobotTree, Vertex
from stlplan.scenario import BUNDLED, read_trajectory, write_trajectory

ALL = ["collision4", "rendezvous", "stability", "recurring", "swarm20", "overall", "disjunction"]


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def one_robot_scenario(tmp_path, formula, x0=0.0, **params):
    extra = ", ".join(f"{k}: {v}" for k, v in params.items())
    return write(
        tmp_path,
        "sc.yaml",
        f"""\
        name: tiny
        formula: "{formula}"
        robots:
          - {{id: 1, dim: 1, x0: [{x0}], xf: random, lo: [-5], hi: [5]}}
        params: {{seed: 3{', ' + extra if extra else ''}}}
        """,
    )


def test_plan_writes_trajectory_report_and_metrics(tmp_path):
    sc = one_robot_scenario(tmp_path, "F[2,4](x1 >= 1) && G[0,6](x1 <= 3)")
    out = tmp_path / "out"
    assert main(["plan", str(sc), "--out", str(out), "--message-log"]) == EXIT_OK
    data = read_trajectory(out / "trajectory.txt")
    assert data.header["status"] == "satisfied" and len(data.header["scenario-hash"]) >= 16
    report = (out / "report.txt").read_text()
    assert "tau(root) = +1" in report and "t* =" in report
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["success"] and metrics["iterations"] >= 1 and metrics["max_robot_solve_time_s"] >= 0
    assert (out / "messages.txt").read_text().startswith("# j k sender receiver")


def test_plan_reports_unsatisfied_budget(tmp_path):
    sc = one_robot_scenario(tmp_path, "G[0,1](x1 <= 0 && x1 >= 1)", L=10, budget=1)
    assert main(["plan", str(sc), "--out", str(tmp_path / "o")]) == EXIT_UNSAT
    assert "unsatisfied nodes:" in (tmp_path / "o" / "report.txt").read_text()


def test_undeclared_robot_is_named(tmp_path, capsys):
    sc = one_robot_scenario(tmp_path, "G[0,5](x9 <= 1)")
    assert main(["plan", str(sc), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "x9" in capsys.readouterr().err


def test_parse_error_is_invalid_input(tmp_path, capsys):
    sc = one_robot_scenario(tmp_path, "G[0,5](x1 <=")
    assert main(["plan", str(sc), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "error:" in capsys.readouterr().err


def test_missing_scenario_file(tmp_path):
    assert main(["plan", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == EXIT_INPUT


def constant_trajectory(tmp_path, value=2.0, t_end=20.0, formula=""):
    trees = {1: RobotTree(Vertex(0.0, np.array([value])), Vertex(t_end, np.array([value])))}
    path = tmp_path / "traj.txt"
    write_trajectory(path, trees, {"formula": formula} if formula else {})
    return path


def test_monitor_exit_codes(tmp_path, capsys):
    traj = constant_trajectory(tmp_path)
    ok = write(tmp_path, "ok.stl", "# comment\nG[0,10](x1 >= 1)\n")
    bad = write(tmp_path, "bad.stl", "G[0,10](x1 >= 3)\n")
    assert main(["monitor", str(traj), str(ok)]) == EXIT_OK
    assert "robustness: 1" in capsys.readouterr().out
    assert main(["monitor", str(traj), str(bad)]) == EXIT_UNSAT
    out = capsys.readouterr().out
    assert "violated" in out and "max h=1 at t=0" in out


def test_monitor_rejects_short_traces(tmp_path, capsys):
    traj = constant_trajectory(tmp_path, t_end=5.0)
    f = write(tmp_path, "f.stl", "G[0,10](x1 >= 1)")
    assert main(["monitor", str(traj), str(f)]) == EXIT_INPUT
    assert "trace ends at 5" in capsys.readouterr().err


def test_monitor_handles_until(tmp_path, capsys):
    trees = {1: RobotTree(Vertex(0.0, np.array([0.0])), Vertex(10.0, np.array([10.0])))}
    write_trajectory(tmp_path / "ramp.txt", trees, {})
    f = write(tmp_path, "u.stl", "(x1 <= 5) U[0,8] (x1 >= 3)")
    assert main(["monitor", str(tmp_path / "ramp.txt"), str(f), "--delta", "0.01"]) == EXIT_OK
    assert re.search(r"robustness: 1\b", capsys.readouterr().out)


def svg_axes(path):
    return len(re.findall(r'<g id="axes_\d+"', path.read_text()))


def test_plot_of_constant_single_robot(tmp_path):
    traj = constant_trajectory(tmp_path, formula="G[0,10](x1 >= 1)")
    out = tmp_path / "flat.svg"
    assert main(["plot", str(traj), "--out", str(out)]) == EXIT_OK
    assert svg_axes(out) == 1


def test_plot_of_collision_run_has_a_panel_per_pair(tmp_path, bundled):
    run = bundled("collision4")
    traj = tmp_path / "c4.txt"
    write_trajectory(traj, run.result.trees, {"formula": run.scenario.formula_text.strip()})
    out = tmp_path / "c4.svg"
    assert main(["plot", str(traj), "--out", str(out)]) == EXIT_OK
    # two state components plus six pair distances
    assert svg_axes(out) == 2 + 6


@pytest.mark.parametrize("name", ALL)
def test_planned_trajectory_passes_the_monitor(tmp_path, bundled, name):
    run = bundled(name)
    assert run.result.success
    traj = tmp_path / "t.txt"
    write_trajectory(traj, run.result.trees, {"formula": run.scenario.formula_text})
    assert main(["monitor", str(traj), str(BUNDLED / f"{name}.yaml")]) == EXIT_OK


def test_trajectory_files_round_trip(tmp_path, bundled):
    run = bundled("rendezvous")
    path = tmp_path / "r.txt"
    write_trajectory(path, run.result.trees, {"seed": 1})
    data = read_trajectory(path)
    for rid, tree in run.result.trees.items():
        times, states = tree.arrays()
        assert np.array_equal(data.robots[rid][0], times) and np.array_equal(data.robots[rid][1], states)


def test_console_script_runs(tmp_path):
    traj = constant_trajectory(tmp_path)
    f = write(tmp_path, "ok.stl", "G[0,10](x1 >= 1)")
    proc = subprocess.run([sys.executable, "-m", "stlplan.cli", "monitor", str(traj), str(f)], capture_output=True)
    assert proc.returncode == 0 and b"satisfied" in proc.stdout
