"""Scenario files and trajectory files.

A scenario is a YAML document::

    name: collision4
    formula: G[20,80](norm(x1 - x2) >= 1 && ...)
    robots:
      - {id: 1, dim: 2, x0: [0, 0], xf: random, lo: [0, 0], hi: [10, 10]}
    params: {delta: 0.1, eta: 0.01, L: 100, Lprime: 100, seed: 0}

Trajectory files are plain text: ``#``-prefixed header lines followed by one
row per vertex, ``robot t x[0] x[1] ...``.  Floats are written with
``repr`` so files round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .cost import PredicateExpr, PredicateError
from .formula import Formula, parse, predicates, robots, to_pnf


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class PlannerParams:
    delta: float = 0.1
    eta: float = 0.01
    L: int = 100
    Lprime: int = 100
    epsilon: float = 1.0
    seed: int = 0
    M: int = 100
    Delta: float = 0.05
    budget: int = 10
    max_branches: int = 16
    guard: float = 0.5

    def __post_init__(self):
        if self.L < 1:
            raise ScenarioError("L must be at least 1")
        if self.M < 2:
            raise ScenarioError("M must be at least 2")
        if not self.epsilon > 0:
            raise ScenarioError("epsilon must be positive")
        if not self.delta > 0:
            raise ScenarioError("delta must be positive")
        if self.eta < 0:
            raise ScenarioError("eta must be non-negative")
        if self.guard < 0:
            raise ScenarioError("guard must be non-negative")
        if self.Lprime < 1:
            raise ScenarioError("Lprime must be at least 1")


@dataclass
class RobotSpec:
    id: int
    dim: int
    x0: np.ndarray
    xf: np.ndarray | None
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class Scenario:
    formula_text: str
    robots: list[RobotSpec]
    params: PlannerParams = field(default_factory=PlannerParams)
    name: str = "scenario"
    source: str = ""

    def __post_init__(self):
        self.formula: Formula = parse(self.formula_text)
        self.validate()

    @property
    def dims(self) -> dict[int, int]:
        return {r.id: r.dim for r in self.robots}

    def robot(self, rid: int) -> RobotSpec:
        for r in self.robots:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def validate(self):
        ids = [r.id for r in self.robots]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ScenarioError(f"robot ids must be unique and contiguous from 1, got {ids}")
        declared = set(ids)
        for rid in sorted(robots(self.formula)):
            if rid not in declared:
                raise ScenarioError(f"formula references undeclared robot x{rid}")
        for r in self.robots:
            for name in ("x0", "lo", "hi"):
                v = getattr(r, name)
                if v.shape != (r.dim,):
                    raise ScenarioError(f"robot {r.id}: {name} must have {r.dim} components")
            if r.xf is not None and r.xf.shape != (r.dim,):
                raise ScenarioError(f"robot {r.id}: xf must have {r.dim} components")
            if np.any(r.lo > r.hi):
                raise ScenarioError(f"robot {r.id}: workspace lo exceeds hi")
        try:
            for p in predicates(to_pnf(self.formula)):
                PredicateExpr(p.h, self.dims)
        except PredicateError as exc:
            raise ScenarioError(str(exc)) from None

    def digest(self) -> str:
        """Stable hash of the scenario content."""
        payload = {
            "formula": self.formula_text,
            "robots": [
                {
                    "id": r.id,
                    "dim": r.dim,
                    "x0": r.x0.tolist(),
                    "xf": None if r.xf is None else r.xf.tolist(),
                    "lo": r.lo.tolist(),
                    "hi": r.hi.tolist(),
                }
                for r in self.robots
            ],
            "params": vars(self.params),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _vec(value, dim: int, what: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape == (1,) and dim > 1:
        arr = np.full(dim, arr[0])
    if arr.shape != (dim,):
        raise ScenarioError(f"{what} must have {dim} components")
    return arr


def scenario_from_dict(doc: Mapping, source: str = "") -> Scenario:
    if "formula" not in doc or "robots" not in doc:
        raise ScenarioError("scenario needs 'formula' and 'robots'")
    specs = []
    for entry in doc["robots"]:
        rid = int(entry["id"])
        dim = int(entry.get("dim", 1))
        xf = entry.get("xf", "random")
        specs.append(
            RobotSpec(
                id=rid,
                dim=dim,
                x0=_vec(entry["x0"], dim, f"robot {rid} x0"),
                xf=None if xf in (None, "random") else _vec(xf, dim, f"robot {rid} xf"),
                lo=_vec(entry.get("lo", -10.0), dim, f"robot {rid} lo"),
                hi=_vec(entry.get("hi", 10.0), dim, f"robot {rid} hi"),
            )
        )
    known = set(PlannerParams.__dataclass_fields__)
    raw = dict(doc.get("params") or {})
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(f"unknown parameters: {sorted(unknown)}")
    types = {k: type(getattr(PlannerParams(), k)) for k in known}
    params = PlannerParams(**{k: types[k](v) for k, v in raw.items()})
    return Scenario(str(doc["formula"]).strip(), specs, params, str(doc.get("name", "scenario")), source)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ScenarioError(f"{path}: expected a mapping at top level")
    return scenario_from_dict(doc, str(path))


BUNDLED = Path(__file__).parent / "scenarios"


def bundled_scenarios() -> dict[str, Path]:
    return {p.stem: p for p in sorted(BUNDLED.glob("*.yaml"))}


def load_bundled(name: str) -> Scenario:
    return load_scenario(BUNDLED / f"{name}.yaml")


# --------------------------------------------------------------------------
# trajectory files


@dataclass
class TrajectoryData:
    header: dict[str, str]
    robots: dict[int, tuple[np.ndarray, np.ndarray]]  # robot -> (times, states[T, d])


def write_trajectory(path, trees: Mapping[int, object], header: Mapping[str, str]):
    # header values are single lines; multi-line formulas are folded
    lines = [f"# {k}: {' '.join(str(v).split())}" for k, v in header.items()]
    lines.append("# columns: robot t x...")
    for rid in sorted(trees):
        times, states = trees[rid].arrays()
        for t, x in zip(times, states):
            lines.append(" ".join([str(rid), repr(float(t))] + [repr(float(v)) for v in x]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path) -> TrajectoryData:
    header: dict[str, str] = {}
    rows: dict[int, list[tuple[float, list[float]]]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].partition(":")
            if sep:
                header[key.strip()] = val.strip()
            continue
        parts = line.split()
        try:
            rid, t, xs = int(parts[0]), float(parts[1]), [float(v) for v in parts[2:]]
        except (ValueError, IndexError):
            raise ScenarioError(f"{path}:{lineno}: malformed row") from None
        rows.setdefault(rid, []).append((t, xs))
    out = {}
    for rid, samples in rows.items():
        times = np.array([s[0] for s in samples])
        if np.any(np.diff(times) <= 0):
            raise ScenarioError(f"{path}: robot {rid} times are not strictly increasing")
        out[rid] = (times, np.array([s[1] for s in samples]))
    return TrajectoryData(header, out)
