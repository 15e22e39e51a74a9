"""STL abstract syntax, text parser/printer and structural queries.

Grammar (``&&`` binds tighter than ``||``)::

    formula    := disj
    disj       := conj ("||" conj)*
    conj       := until ("&&" until)*
    until      := term ("U" "[" num "," num "]" term)*
    term       := "!" term | "G" "[" num "," num "]" term
                | "F" "[" num "," num "]" term | "true" | "(" formula ")"
                | comparison
    comparison := expr ("<=" | ">=" | "<" | ">") expr
    expr       := arithmetic over x<i>, x<i>[k], t, numbers,
                  + - * / ^, norm() abs() exp() sin() cos() sqrt()

Every predicate is stored in the form ``h <= 0``.  Strict and non-strict
comparisons are treated alike: the boundary ``h == 0`` has measure zero for
continuously sampled trajectories.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .expr import (
    FUNCTIONS,
    BinOp,
    Call,
    Comp,
    Const,
    Expr,
    Neg,
    Time,
    Var,
    simplify_neg,
    to_text,
)


class FormulaError(ValueError):
    """Base class for formula construction errors."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class IntervalError(FormulaError):
    pass


class UnsupportedFormulaError(FormulaError):
    pass


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Pred:
    """Predicate ``h <= 0``."""

    h: Expr

    @property
    def robots(self) -> frozenset[int]:
        return self.h.robots()


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise FormulaError("conjunction needs at least two operands")


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise FormulaError("disjunction needs at least two operands")


def _check_interval(a: float, b: float):
    if not (0 <= a < b < float("inf")):
        raise IntervalError(f"invalid interval [{a}, {b}]: need 0 <= a < b < inf")


@dataclass(frozen=True)
class Always:
    a: float
    b: float
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Eventually:
    a: float
    b: float
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Until:
    a: float
    b: float
    left: "Formula"
    right: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


Formula = Union[TrueF, Pred, Not, And, Or, Always, Eventually, Until]
TEMPORAL = (Always, Eventually, Until)


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (Not, Always, Eventually)):
        return (f.child,)
    if isinstance(f, (And, Or)):
        return f.children
    if isinstance(f, Until):
        return (f.left, f.right)
    return ()


def is_leaf(f: Formula) -> bool:
    return isinstance(f, (Pred, TrueF))


def predicates(f: Formula) -> list[Pred]:
    """Leaves of ``f`` that are predicates, left to right."""
    if isinstance(f, Pred):
        return [f]
    out: list[Pred] = []
    for c in children(f):
        out.extend(predicates(c))
    return out


def robots(f: Formula) -> frozenset[int]:
    return frozenset().union(*(p.robots for p in predicates(f)))


# --------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\d*\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)
  | (?P<var>x\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>&&|\|\||<=|>=|[<>!()\[\],+\-*/^])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind == "ws":
            for i, ch in enumerate(tok):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        else:
            tokens.append(Token(kind, tok, line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# --------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, msg: str) -> FormulaSyntaxError:
        t = self.tok
        return FormulaSyntaxError(msg, t.line, t.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind != "eof":
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    # formula level --------------------------------------------------------

    def formula(self) -> Formula:
        parts = [self.conj()]
        while self.accept("||"):
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conj(self) -> Formula:
        parts = [self.until()]
        while self.accept("&&"):
            parts.append(self.until())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def until(self) -> Formula:
        left = self.term()
        while self.tok.kind == "name" and self.tok.text == "U":
            self.i += 1
            a, b = self.interval()
            right = self.term()
            left = Until(a, b, left, right)
        return left

    def interval(self) -> tuple[float, float]:
        t = self.tok
        self.expect("[")
        a = self.number()
        self.expect(",")
        b = self.number()
        self.expect("]")
        if not (0 <= a < b):
            raise IntervalError(f"invalid interval [{a}, {b}] at line {t.line}, column {t.col}: need 0 <= a < b")
        return a, b

    def number(self) -> float:
        neg = self.accept("-")
        if self.tok.kind != "num":
            raise self.error("expected a number")
        v = float(self.tok.text)
        self.i += 1
        return -v if neg else v

    def term(self) -> Formula:
        t = self.tok
        if self.accept("!"):
            return Not(self.term())
        if t.kind == "name" and t.text in ("G", "F") and self.toks[self.i + 1].text == "[":
            self.i += 1
            a, b = self.interval()
            child = self.term()
            return Always(a, b, child) if t.text == "G" else Eventually(a, b, child)
        if t.kind == "name" and t.text == "true":
            self.i += 1
            return TrueF()
        if t.text == "(":
            # either a parenthesised formula or a comparison whose left side
            # starts with a parenthesised expression
            save = self.i
            try:
                return self.comparison()
            except FormulaSyntaxError:
                self.i = save
            self.expect("(")
            f = self.formula()
            self.expect(")")
            return f
        return self.comparison()

    def comparison(self) -> Pred:
        lhs = self.expr()
        op = self.tok.text
        if op not in ("<=", ">=", "<", ">"):
            raise self.error("expected a comparison operator")
        self.i += 1
        rhs = self.expr()
        if op in ("<=", "<"):
            h = lhs if rhs == Const(0.0) else BinOp("-", lhs, rhs)
        else:
            h = simplify_neg(lhs) if rhs == Const(0.0) else BinOp("-", rhs, lhs)
        return Pred(h)

    # expression level -----------------------------------------------------

    def expr(self) -> Expr:
        e = self.product()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.product())
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.accept("-"):
            if self.tok.kind == "num":
                v = float(self.tok.text)
                self.i += 1
                return self.power(Const(-v))
            return Neg(self.unary())
        return self.power(self.primary())

    def power(self, base: Expr) -> Expr:
        if self.accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Const(float(t.text))
        if t.kind == "var":
            self.i += 1
            robot = int(t.text[1:])
            if self.accept("["):
                if self.tok.kind != "num" or not self.tok.text.isdigit():
                    raise self.error("expected a component index")
                k = int(self.tok.text)
                self.i += 1
                self.expect("]")
                return Comp(robot, k)
            return Var(robot)
        if t.kind == "name":
            if t.text == "t":
                self.i += 1
                return Time()
            if t.text in FUNCTIONS:
                self.i += 1
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(t.text, arg)
            raise self.error(f"unknown name {t.text!r}")
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        raise self.error(f"unexpected {t.text or 'end of input'!r}")


def parse(text: str) -> Formula:
    """Parse formula text into an AST."""
    p = _Parser(text)
    f = p.formula()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}")
    return f


def _num(v: float) -> str:
    return repr(float(v))


def to_text_formula(f: Formula) -> str:
    """Print ``f`` in the parser's grammar; ``parse`` inverts it exactly."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, Pred):
        return f"{to_text(f.h)} <= 0"
    if isinstance(f, Not):
        return f"!({to_text_formula(f.child)})"
    if isinstance(f, And):
        return " && ".join(f"({to_text_formula(c)})" for c in f.children)
    if isinstance(f, Or):
        return " || ".join(f"({to_text_formula(c)})" for c in f.children)
    if isinstance(f, Always):
        return f"G[{_num(f.a)},{_num(f.b)}]({to_text_formula(f.child)})"
    if isinstance(f, Eventually):
        return f"F[{_num(f.a)},{_num(f.b)}]({to_text_formula(f.child)})"
    if isinstance(f, Until):
        return f"({to_text_formula(f.left)}) U[{_num(f.a)},{_num(f.b)}] ({to_text_formula(f.right)})"
    raise TypeError(f)


# --------------------------------------------------------------------------
# transformations


def to_pnf(f: Formula) -> Formula:
    """Push negations down to the predicates."""
    return _pnf(f, False)


def _pnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Not):
        return _pnf(f.child, not neg)
    if isinstance(f, TrueF):
        # the negation of true is a predicate that never holds
        return Pred(Const(1.0)) if neg else f
    if isinstance(f, Pred):
        return Pred(simplify_neg(f.h)) if neg else f
    if isinstance(f, And):
        kids = tuple(_pnf(c, neg) for c in f.children)
        return Or(kids) if neg else And(kids)
    if isinstance(f, Or):
        kids = tuple(_pnf(c, neg) for c in f.children)
        return And(kids) if neg else Or(kids)
    if isinstance(f, Always):
        c = _pnf(f.child, neg)
        return Eventually(f.a, f.b, c) if neg else Always(f.a, f.b, c)
    if isinstance(f, Eventually):
        c = _pnf(f.child, neg)
        return Always(f.a, f.b, c) if neg else Eventually(f.a, f.b, c)
    if isinstance(f, Until):
        if neg:
            raise UnsupportedFormulaError("negated until has no positive normal form here")
        return Until(f.a, f.b, _pnf(f.left, False), _pnf(f.right, False))
    raise TypeError(f)


def time_horizon(f: Formula) -> float:
    if isinstance(f, (TrueF, Pred)):
        return 0.0
    if isinstance(f, Not):
        return time_horizon(f.child)
    if isinstance(f, (And, Or)):
        return max(time_horizon(c) for c in f.children)
    if isinstance(f, (Always, Eventually)):
        return f.b + time_horizon(f.child)
    if isinstance(f, Until):
        return f.b + max(time_horizon(f.left), time_horizon(f.right))
    raise TypeError(f)


def subformula(f: Formula, address: tuple[int, ...]) -> Formula:
    for i in address:
        f = children(f)[i]
    return f


@dataclass(frozen=True)
class PathRecord:
    """One root-to-leaf path.

    ``address`` lists child indices from the root.  ``nodes`` holds the
    subformula at every prefix of the address, root first, leaf last.
    ``nested_same`` flags a temporal node whose direct child is a temporal node
    of the same kind (e.g. ``G[1,10] G[0,2] mu``); conjunctions between two
    always operators do not break the nesting.
    """

    address: tuple[int, ...]
    nodes: tuple[Formula, ...]
    nested_same: bool = False

    @property
    def leaf(self) -> Formula:
        return self.nodes[-1]

    def prefixes(self) -> Iterator[tuple[int, ...]]:
        for k in range(len(self.address) + 1):
            yield self.address[:k]


def _nests_same(chain) -> bool:
    prev = None  # last temporal node still directly above the current one
    for node in chain:
        if isinstance(node, (Always, Eventually)):
            if prev is not None and type(prev) is type(node):
                return True
            prev = node
        elif not (isinstance(node, And) and isinstance(prev, Always)):
            prev = None
    return False


def enumerate_paths(f: Formula) -> list[PathRecord]:
    out: list[PathRecord] = []

    def walk(node, addr, chain):
        chain = chain + (node,)
        kids = children(node)
        if not kids:
            out.append(PathRecord(addr, chain, _nests_same(chain)))
            return
        for i, c in enumerate(kids):
            walk(c, addr + (i,), chain)

    walk(f, (), ())
    return out


# --------------------------------------------------------------------------
# satisfaction tree


@dataclass
class SatisfactionTree:
    """Satisfaction variables mirroring the parse tree.

    ``tau`` maps the address of every set node to +1/-1; ``leaves`` maps
    leaf addresses to their predicate.  For a formula that is a single leaf,
    the root's variable is stored under the empty address in ``tau``.
    """

    formula: Formula
    tau: dict[tuple[int, ...], int] = field(default_factory=dict)
    leaves: dict[tuple[int, ...], Formula] = field(default_factory=dict)

    @property
    def root(self) -> int:
        return self.tau[()]

    def set_nodes(self) -> list[tuple[int, ...]]:
        return [a for a in self.tau if a not in self.leaves]

    def reset(self, addresses=None):
        for a in self.tau if addresses is None else addresses:
            self.tau[a] = -1


def build_satisfaction_tree(f: Formula) -> SatisfactionTree:
    tree = SatisfactionTree(f)

    def walk(node, addr):
        kids = children(node)
        if not kids:
            tree.leaves[addr] = node
            if addr == ():
                tree.tau[addr] = -1
            return
        tree.tau[addr] = -1
        for i, c in enumerate(kids):
            walk(c, addr + (i,))

    walk(f, ())
    return tree


def contains(f: Formula, kind) -> bool:
    return isinstance(f, kind) or any(contains(c, kind) for c in children(f))
