"""Validity domains of formula paths and the eventually-operator bookkeeping.

Each root-to-leaf path gets the time interval over which its predicate has
to hold.  ``G`` operators shift by their lower bound and finally contribute
their whole window; ``F`` operators shift by ``t* + T*`` where ``T*`` is the
instant picked for the operator and ``t*`` the last recorded satisfaction.
Conjunctions and disjunctions are transparent.  Directly nested operators of
the same kind are merged first, so ``G[1,10] G[0,2] mu`` covers ``[1, 12]``;
an always operator also merges with one reached through conjunctions.
A path made of a bare predicate covers ``[0, th(phi)]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .formula import (
    Always,
    And,
    Eventually,
    Formula,
    PathRecord,
    UnsupportedFormulaError,
    Until,
    enumerate_paths,
    time_horizon,
)

TOL = 1e-9


class Kind(enum.Enum):
    F_SAMPLED = "F"
    G_COVERED = "G"


@dataclass(frozen=True)
class ChainOp:
    """A temporal operator on a path after merging same-kind nesting."""

    address: tuple[int, ...]
    kind: str  # "G" or "F"
    a: float
    b: float


@dataclass(frozen=True)
class ValidityDomain:
    path: tuple[int, ...]
    kind: Kind
    lo: float
    hi: float
    owner: tuple[int, ...] | None  # address of the nearest eventually operator

    def contains(self, t: float, tol: float = TOL) -> bool:
        return self.lo - tol <= t <= self.hi + tol

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi


def temporal_chain(path: PathRecord) -> list[ChainOp]:
    ops: list[ChainOp] = []
    prev_direct = False
    for k, node in enumerate(path.nodes[:-1]):
        if isinstance(node, Until):
            raise UnsupportedFormulaError("the planner has no validity domain for until")
        if not isinstance(node, (Always, Eventually)):
            # always distributes over conjunction, so G (G mu && psi) still nests
            prev_direct = prev_direct and isinstance(node, And) and ops[-1].kind == "G"
            continue
        kind = "G" if isinstance(node, Always) else "F"
        if prev_direct and ops and ops[-1].kind == kind:
            last = ops[-1]
            ops[-1] = ChainOp(last.address, kind, last.a + node.a, last.b + node.b)
        else:
            ops.append(ChainOp(path.address[:k], kind, node.a, node.b))
        prev_direct = True
    return ops


@dataclass
class EventuallyEntry:
    t_star: float = 0.0
    T_star: float | None = None
    tau: int = -1
    last: float | None = None  # absolute instant of the last recorded satisfaction


@dataclass
class EventuallyState:
    entries: dict[tuple[int, ...], EventuallyEntry] = field(default_factory=dict)

    @classmethod
    def for_formula(cls, f: Formula) -> "EventuallyState":
        st = cls()
        for p in enumerate_paths(f):
            for op in temporal_chain(p):
                if op.kind == "F":
                    st.entries.setdefault(op.address, EventuallyEntry())
        return st

    def __getitem__(self, address) -> EventuallyEntry:
        return self.entries.setdefault(tuple(address), EventuallyEntry())

    def copy(self) -> "EventuallyState":
        return EventuallyState({k: EventuallyEntry(**vars(v)) for k, v in self.entries.items()})


def compute_vd(path: PathRecord, f: Formula, ev: EventuallyState) -> ValidityDomain:
    ops = temporal_chain(path)
    if not ops:
        return ValidityDomain(path.address, Kind.G_COVERED, 0.0, time_horizon(f), None)
    off = 0.0
    owner: tuple[int, ...] | None = None
    for idx, op in enumerate(ops):
        last = idx == len(ops) - 1
        if op.kind == "G":
            if last:
                return ValidityDomain(path.address, Kind.G_COVERED, off + op.a, off + op.b, owner)
            off += op.a
            continue
        owner = op.address
        entry = ev[op.address]
        if entry.T_star is None:
            # no instant picked yet: any instant of the window will do
            base = off + entry.t_star
            return ValidityDomain(path.address, Kind.F_SAMPLED, base + op.a, base + op.b, owner)
        off += entry.t_star + entry.T_star
        if last:
            return ValidityDomain(path.address, Kind.F_SAMPLED, off, off, owner)
    raise AssertionError("unreachable")


def chain_offset(path: PathRecord, address: tuple[int, ...], ev: EventuallyState) -> float | None:
    """Absolute start offset of the operator at ``address`` on ``path``.

    None when an enclosing eventually operator has no instant picked yet.
    """
    off = 0.0
    for op in temporal_chain(path):
        if op.address == address:
            return off
        if op.kind == "G":
            off += op.a
        else:
            entry = ev[op.address]
            if entry.T_star is None:
                return None
            off += entry.t_star + entry.T_star
    raise KeyError(address)


def _find_op(path: PathRecord, address) -> ChainOp:
    for op in temporal_chain(path):
        if op.address == tuple(address):
            return op
    raise KeyError(address)


def eventually_window(path: PathRecord, address, ev: EventuallyState) -> tuple[float, float] | None:
    """Current sampling window ``off + t* + [a, b]`` of an eventually operator."""
    off = chain_offset(path, tuple(address), ev)
    if off is None:
        return None
    op = _find_op(path, address)
    entry = ev[op.address]
    return off + entry.t_star + op.a, off + entry.t_star + op.b


def record_eventually(path: PathRecord, address, t0: float, ev: EventuallyState) -> EventuallyState:
    """Record that the eventually operator at ``address`` holds at ``t0``.

    ``t0`` must lie in the operator's own window ``off + [a, b]`` or in its
    current shifted window ``off + t* + [a, b]``.  On success ``t*`` becomes
    ``t0 - off`` (the satisfaction instant measured from the operator's
    offset), the picked instant is cleared and the variable set to +1.
    """
    address = tuple(address)
    op = _find_op(path, address)
    off = chain_offset(path, address, ev)
    if off is None:
        raise ValueError("enclosing eventually operator has no instant picked")
    entry = ev[address]
    windows = [(off + op.a, off + op.b), (off + entry.t_star + op.a, off + entry.t_star + op.b)]
    if not any(lo - TOL <= t0 <= hi + TOL for lo, hi in windows):
        raise ValueError(f"t0={t0} outside the window of F[{op.a},{op.b}] (offset {off}, t*={entry.t_star})")
    entry.t_star = t0 - off
    entry.T_star = None
    entry.tau = 1
    entry.last = t0
    return ev


def pick_instant(path: PathRecord, address, t0: float, ev: EventuallyState) -> bool:
    """Fix ``T*`` of an eventually operator to ``t0`` if ``t0`` lies in its window."""
    entry = ev[tuple(address)]
    if entry.T_star is not None:
        return False
    win = eventually_window(path, address, ev)
    if win is None or not (win[0] - TOL <= t0 <= win[1] + TOL):
        return False
    off = chain_offset(path, tuple(address), ev)
    entry.T_star = t0 - off - entry.t_star
    return True


def reset_eventually_all(ev: EventuallyState) -> EventuallyState:
    for entry in ev.entries.values():
        entry.t_star = 0.0
        entry.T_star = None
        entry.tau = -1
        entry.last = None
    return ev
