"""Time-bounded CSL formulas: AST, concrete syntax and state-level evaluation.

Concrete syntax (PRISM-like)::

    P>=0.9 [ F<=10.0 (D >= 3) ]
    P>=1 [ G (ThH => P>=1-eta4 [ F<=w_th (Alarm | !ThH) ]) ]
    P>=1-gamma2 [ (!Alarm) W (!ThL) ]
    A + B = 1

Probability and time bounds may be arithmetic expressions over numbers and
parameter names; they are bound when the formula is parsed.  ``P>=1 [ G phi ]``
with no time bound is the "holds in every reachable state" operator.
Atoms are linear comparisons over species counts, the named predicates
(``healthy``, ``Reset``, ``ThH``, ``ThL``, ``Alarm``, ``Hpres``, ``Hdet``,
``hbHigh``, ``hbLow``), ``true``/``false`` and explicit labels ``@name``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

NAMED_PREDICATES = ("healthy", "Reset", "ThH", "ThL", "Alarm", "Hpres", "Hdet", "hbHigh", "hbLow")
CMP_OPS = (">=", "<=", ">", "<", "=", "!=")


class FormulaError(ValueError):
    pass


class Formula:
    __slots__ = ()

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True)
class Compare(Formula):
    """``sum(coef * #species) op rhs``."""

    terms: tuple[tuple[str, float], ...]
    op: str
    rhs: float


@dataclass(frozen=True)
class Named(Formula):
    name: str


@dataclass(frozen=True)
class Label(Formula):
    name: str


@dataclass(frozen=True)
class Healthy(Formula):
    """A, B, C all positive and (A-B)^2 + (B-C)^2 + (C-A)^2 > tau."""

    tau: float
    species: tuple[str, str, str] = ("A", "B", "C")


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


def _check_prob(f):
    if not 0.0 <= f.bound <= 1.0:
        raise FormulaError(f"probability bound {f.bound} outside [0, 1]")
    t = getattr(f, "time", 0.0)
    if t < 0:
        raise FormulaError(f"negative time bound {t}")


@dataclass(frozen=True)
class ProbEventually(Formula):
    bound: float
    time: float
    arg: Formula
    strict: bool = False

    __post_init__ = _check_prob


@dataclass(frozen=True)
class ProbGlobally(Formula):
    bound: float
    time: float
    arg: Formula
    strict: bool = False

    __post_init__ = _check_prob


@dataclass(frozen=True)
class ProbWeakUntil(Formula):
    bound: float
    left: Formula
    right: Formula
    strict: bool = False

    __post_init__ = _check_prob


@dataclass(frozen=True)
class GloballyAll(Formula):
    arg: Formula


PROBABILISTIC = (ProbEventually, ProbGlobally, ProbWeakUntil, GloballyAll)


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (Not, ProbEventually, ProbGlobally, GloballyAll)):
        return (f.arg,)
    if isinstance(f, (And, Or, Implies)):
        return (f.left, f.right)
    if isinstance(f, ProbWeakUntil):
        return (f.left, f.right)
    return ()


def is_probabilistic(f: Formula) -> bool:
    return isinstance(f, PROBABILISTIC)


def prob_depth(f: Formula) -> int:
    inner = max((prob_depth(c) for c in children(f)), default=0)
    return inner + (1 if is_probabilistic(f) else 0)


def max_time_bound(f: Formula) -> float:
    own = f.time if isinstance(f, (ProbEventually, ProbGlobally)) else 0.0
    return max([own] + [max_time_bound(c) for c in children(f)])


def conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        return conjuncts(f.left) + conjuncts(f.right)
    return [f]


def conj(*fs: Formula) -> Formula:
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


# --- context -----------------------------------------------------------------


@dataclass
class PredicateContext:
    """Species order, named-predicate definitions, explicit labels and
    species aliases (``Y`` for the detector top rung and so on)."""

    species: tuple[str, ...]
    named: dict[str, Formula] = field(default_factory=dict)
    labels: dict[str, np.ndarray] = field(default_factory=dict)
    aliases: dict[str, str] = field(default_factory=dict)

    def index(self, name: str) -> int:
        name = self.aliases.get(name, name)
        try:
            return self.species.index(name)
        except ValueError:
            raise FormulaError(f"unknown species {name!r}") from None

    def expand(self, f: Formula, _depth: int = 0) -> Formula:
        """Replace named predicates by their definitions."""
        if _depth > 32:
            raise FormulaError("named predicate definitions are cyclic")
        if isinstance(f, Named):
            if f.name not in self.named:
                raise FormulaError(f"named predicate {f.name!r} is not defined for this model")
            return self.expand(self.named[f.name], _depth + 1)
        kids = children(f)
        if not kids:
            return f
        new = [self.expand(c, _depth) for c in kids]
        if isinstance(f, (Not, GloballyAll)):
            return type(f)(new[0])
        if isinstance(f, (And, Or, Implies)):
            return type(f)(*new)
        if isinstance(f, (ProbEventually, ProbGlobally)):
            return type(f)(f.bound, f.time, new[0], f.strict)
        if isinstance(f, ProbWeakUntil):
            return ProbWeakUntil(f.bound, new[0], new[1], f.strict)
        raise FormulaError(f"cannot expand {f!r}")


def _compare(v: np.ndarray, op: str, rhs: float) -> np.ndarray:
    if op == ">=":
        return v >= rhs
    if op == "<=":
        return v <= rhs
    if op == ">":
        return v > rhs
    if op == "<":
        return v < rhs
    if op == "=":
        return v == rhs
    if op == "!=":
        return v != rhs
    raise FormulaError(f"unknown comparison {op}")


def eval_state(f: Formula, states: np.ndarray, ctx: PredicateContext) -> np.ndarray:
    """Evaluate a non-probabilistic formula on each row of ``states``."""
    states = np.atleast_2d(states)
    n = states.shape[0]
    if isinstance(f, TrueF):
        return np.ones(n, bool)
    if isinstance(f, FalseF):
        return np.zeros(n, bool)
    if isinstance(f, Compare):
        v = np.zeros(n)
        for name, c in f.terms:
            v = v + c * states[:, ctx.index(name)]
        return _compare(v, f.op, f.rhs)
    if isinstance(f, Healthy):
        a, b, c = (states[:, ctx.index(s)].astype(np.float64) for s in f.species)
        spread = (a - b) ** 2 + (b - c) ** 2 + (c - a) ** 2
        return (a > 0) & (b > 0) & (c > 0) & (spread > f.tau)
    if isinstance(f, Named):
        return eval_state(ctx.expand(f), states, ctx)
    if isinstance(f, Label):
        if f.name not in ctx.labels:
            raise FormulaError(f"unknown label @{f.name}")
        lab = np.asarray(ctx.labels[f.name], bool)
        if lab.shape != (n,):
            raise FormulaError("labels are only defined on the full CTMC state list")
        return lab
    if isinstance(f, Not):
        return ~eval_state(f.arg, states, ctx)
    if isinstance(f, And):
        return eval_state(f.left, states, ctx) & eval_state(f.right, states, ctx)
    if isinstance(f, Or):
        return eval_state(f.left, states, ctx) | eval_state(f.right, states, ctx)
    if isinstance(f, Implies):
        return ~eval_state(f.left, states, ctx) | eval_state(f.right, states, ctx)
    raise FormulaError(f"{type(f).__name__} needs a probabilistic evaluator")


# --- compiled form for the simulation kernels ---------------------------------

OP_CODES = {op: i for i, op in enumerate(CMP_OPS)}
PUSH, NOT, AND, OR, PUSH_TRUE, PUSH_FALSE = range(6)


@dataclass(frozen=True)
class CompiledPredicate:
    program: np.ndarray  # (n_ops, 2) int64
    kind: np.ndarray  # 0 linear, 1 healthy
    coef: np.ndarray  # (n_atoms, n_species)
    op: np.ndarray
    rhs: np.ndarray
    abc: np.ndarray  # (n_atoms, 3) species indices for healthy

    def arrays(self):
        return self.program, self.kind, self.coef, self.op, self.rhs, self.abc


def compile_predicate(f: Formula, ctx: PredicateContext) -> CompiledPredicate:
    f = ctx.expand(f)
    S = len(ctx.species)
    prog: list[tuple[int, int]] = []
    atoms: list[tuple] = []

    def emit(g):
        if isinstance(g, TrueF):
            prog.append((PUSH_TRUE, 0))
        elif isinstance(g, FalseF):
            prog.append((PUSH_FALSE, 0))
        elif isinstance(g, Compare):
            coef = np.zeros(S)
            for name, c in g.terms:
                coef[ctx.index(name)] += c
            atoms.append((0, coef, OP_CODES[g.op], g.rhs, (0, 0, 0)))
            prog.append((PUSH, len(atoms) - 1))
        elif isinstance(g, Healthy):
            abc = tuple(ctx.index(s) for s in g.species)
            atoms.append((1, np.zeros(S), 0, g.tau, abc))
            prog.append((PUSH, len(atoms) - 1))
        elif isinstance(g, Not):
            emit(g.arg)
            prog.append((NOT, 0))
        elif isinstance(g, (And, Or)):
            emit(g.left)
            emit(g.right)
            prog.append((AND if isinstance(g, And) else OR, 0))
        elif isinstance(g, Implies):
            emit(g.left)
            prog.append((NOT, 0))
            emit(g.right)
            prog.append((OR, 0))
        else:
            raise FormulaError(f"cannot compile {type(g).__name__} into a state predicate")

    emit(f)
    n = max(len(atoms), 1)
    kind = np.zeros(n, np.int64)
    coef = np.zeros((n, S))
    op = np.zeros(n, np.int64)
    rhs = np.zeros(n)
    abc = np.zeros((n, 3), np.int64)
    for i, (k, c, o, r, idx) in enumerate(atoms):
        kind[i], coef[i], op[i], rhs[i], abc[i] = k, c, o, r, idx
    return CompiledPredicate(np.array(prog, np.int64).reshape(-1, 2), kind, coef, op, rhs, abc)


# --- text rendering ----------------------------------------------------------


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf"
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def _pbound(f) -> str:
    return f"P{'>' if f.strict else '>='}{_num(f.bound)}"


def to_text(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Compare):
        parts = []
        for i, (name, c) in enumerate(f.terms):
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            term = name if mag == 1 else f"{_num(mag)}*{name}"
            parts.append((("-" if sign == "-" else "") if i == 0 else f" {sign} ") + term)
        lhs = "".join(parts) if parts else "0"
        return f"{lhs} {f.op} {_num(f.rhs)}"
    if isinstance(f, Named):
        return f.name
    if isinstance(f, Label):
        return f"@{f.name}"
    if isinstance(f, Healthy):
        return f"healthy[tau={_num(f.tau)}]"
    if isinstance(f, Not):
        return f"!{_wrap(f.arg)}"
    if isinstance(f, And):
        return f"{_wrap(f.left)} & {_wrap(f.right)}"
    if isinstance(f, Or):
        return f"{_wrap(f.left)} | {_wrap(f.right)}"
    if isinstance(f, Implies):
        return f"{_wrap(f.left)} => {_wrap(f.right)}"
    if isinstance(f, ProbEventually):
        return f"{_pbound(f)} [ F<={_num(f.time)} {_wrap(f.arg)} ]"
    if isinstance(f, ProbGlobally):
        return f"{_pbound(f)} [ G<={_num(f.time)} {_wrap(f.arg)} ]"
    if isinstance(f, ProbWeakUntil):
        return f"{_pbound(f)} [ {_wrap(f.left)} W {_wrap(f.right)} ]"
    if isinstance(f, GloballyAll):
        return f"P>=1 [ G {_wrap(f.arg)} ]"
    raise FormulaError(f"cannot render {f!r}")


def _wrap(f: Formula) -> str:
    if isinstance(f, (TrueF, FalseF, Named, Label, Healthy)) or is_probabilistic(f):
        return to_text(f)
    return f"({to_text(f)})"


# --- parser ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | (?P<ident>@?[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op>=>|>=|<=|!=|==|[=<>&|!()\[\]+\-*/])
    )""",
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise FormulaError(f"unexpected character {text[pos:pos + 1]!r} at column {pos + 1}")
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str, params: Mapping[str, float] | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.params = dict(params or {})
        self.params.setdefault("inf", math.inf)

    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def accept(self, value: str) -> bool:
        if self.peek()[1] == value and self.peek()[0] != "end":
            self.i += 1
            return True
        return False

    def expect(self, value: str):
        tok = self.next()
        if tok[1] != value:
            raise FormulaError(f"expected {value!r} at column {tok[2] + 1}, got {tok[1]!r}")
        return tok

    # bound expressions: numbers, parameter names, + - * /, no parentheses
    def expr(self) -> float:
        value = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> float:
        value = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            rhs = self.factor()
            value = value * rhs if op == "*" else value / rhs
        return value

    def factor(self) -> float:
        kind, text, col = self.next()
        if text == "-":
            return -self.factor()
        if kind == "num":
            return float(text)
        if kind == "ident":
            if text not in self.params:
                raise FormulaError(f"unbound parameter {text!r} at column {col + 1}")
            return float(self.params[text])
        raise FormulaError(f"expected a number or parameter at column {col + 1}, got {text!r}")

    def formula(self) -> Formula:
        left = self.disj()
        if self.accept("=>"):
            return Implies(left, self.formula())
        return left

    def disj(self) -> Formula:
        left = self.conj()
        while self.accept("|"):
            left = Or(left, self.conj())
        return left

    def conj(self) -> Formula:
        left = self.unary()
        while self.accept("&"):
            left = And(left, self.unary())
        return left

    def unary(self) -> Formula:
        if self.accept("!"):
            return Not(self.unary())
        return self.primary()

    def primary(self) -> Formula:
        kind, text, col = self.peek()
        if kind == "ident" and text == "P" and self.peek(1)[1] in (">=", ">"):
            return self.prob()
        if text == "(":
            save = self.i
            self.next()
            inner = self.formula()
            self.expect(")")
            if self.peek()[1] in CMP_OPS + ("==", "+", "-", "*"):
                # it was a parenthesised linear expression after all
                self.i = save
                return self.comparison()
            return inner
        if kind == "ident" and text == "true":
            self.next()
            return TrueF()
        if kind == "ident" and text == "false":
            self.next()
            return FalseF()
        if kind == "ident" and text.startswith("@"):
            self.next()
            return Label(text[1:])
        if kind == "ident" and self.peek(1)[1] not in CMP_OPS + ("==", "+", "-", "*"):
            self.next()
            return Named(text)
        if kind in ("ident", "num") or text == "-":
            return self.comparison()
        raise FormulaError(f"unexpected {text!r} at column {col + 1}")

    def linear(self) -> tuple[dict[str, float], float]:
        terms: dict[str, float] = {}
        const = 0.0
        sign = 1.0
        first = True
        while True:
            if self.accept("-"):
                sign = -sign
            elif not first:
                pass
            kind, text, col = self.next()
            coef = 1.0
            if kind == "num":
                coef = float(text)
                if self.accept("*"):
                    kind, text, col = self.next()
                else:
                    const += sign * coef
                    kind = None
            if kind == "ident" and not text.startswith("@"):
                terms[text] = terms.get(text, 0.0) + sign * coef
            elif kind is not None:
                raise FormulaError(f"bad linear term {text!r} at column {col + 1}")
            first = False
            nxt = self.peek()[1]
            if nxt == "+":
                self.next()
                sign = 1.0
            elif nxt == "-":
                self.next()
                sign = -1.0
            else:
                return terms, const

    def comparison(self) -> Formula:
        paren = self.accept("(")
        lt, lc = self.linear()
        if paren:
            self.expect(")")
        kind, op, col = self.next()
        if op == "==":
            op = "="
        if op not in CMP_OPS:
            raise FormulaError(f"expected a comparison at column {col + 1}, got {op!r}")
        rt, rc = self.linear()
        terms = dict(lt)
        for name, c in rt.items():
            terms[name] = terms.get(name, 0.0) - c
        terms = {k: v for k, v in terms.items() if v != 0}
        return Compare(tuple(terms.items()), op, rc - lc)

    def prob(self) -> Formula:
        self.expect("P")
        strict = self.next()[1] == ">"
        bound = self.expr()
        self.expect("[")
        kind, text, col = self.peek()
        if text in ("F", "G") and kind == "ident":
            self.next()
            time = math.inf
            if self.accept("<="):
                time = self.expr()
            arg = self.unary()
            self.expect("]")
            if text == "F":
                return ProbEventually(bound, time, arg, strict)
            if math.isinf(time) and bound == 1.0 and not strict:
                return GloballyAll(arg)
            return ProbGlobally(bound, time, arg, strict)
        left = self.unary()
        self.expect("W")
        right = self.unary()
        self.expect("]")
        return ProbWeakUntil(bound, left, right, strict)


def parse_formula(text: str, params: Mapping[str, float] | None = None) -> Formula:
    p = _Parser(text, params)
    f = p.formula()
    kind, tok, col = p.peek()
    if kind != "end":
        raise FormulaError(f"trailing input {tok!r} at column {col + 1}")
    return f


def parse_csl_file(text: str, params: Mapping[str, float] | None = None) -> list[tuple[str, Formula]]:
    """One formula per line, optionally prefixed by ``name:``; ``#`` comments."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name = f"f{len(out) + 1}"
        m = re.match(r"^([A-Za-z_][A-Za-z0-9_.\-]*)\s*:\s*(.*)$", line)
        if m:
            name, line = m.group(1), m.group(2)
        try:
            out.append((name, parse_formula(line, params)))
        except FormulaError as exc:
            raise FormulaError(f"line {lineno}: {exc}") from None
    return out
