"""Reader and canonical writer for the ``.crn`` text format.

Example::

    # oscillator with heartbeat
    A + B ->{2.5} 2 B + H
    H ->{0.1} 0
    X1 -> X2            # rate defaults to 1
    init A = 800
    volume = 1

An optional ``species A B C`` line declares species up front.  With
``strict=True`` every species used by a reaction or init line must be
declared.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .crn import Crn, Reaction

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_REAL = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TERM_RE = re.compile(rf"^\s*(?:(\d+)\s*)?({_IDENT})\s*$")
_ARROW_RE = re.compile(rf"->\s*(?:\{{\s*({_REAL})\s*\}})?")
_INIT_RE = re.compile(rf"^init\s+({_IDENT})\s*=\s*(\S+)\s*$")
_VOLUME_RE = re.compile(r"^volume\s*=\s*(\S+)\s*$")
_SPECIES_RE = re.compile(r"^species\b(.*)$")


class CrnSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ParsedReaction:
    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]
    rate: float = 1.0


@dataclass(eq=False)
class CrnDocument:
    declarations: list[str] | None = None
    reactions: list[ParsedReaction] = field(default_factory=list)
    init: dict[str, int] = field(default_factory=dict)
    volume: float = 1.0

    def __eq__(self, other):
        # declaration order is not significant; the canonical form sorts it
        if not isinstance(other, CrnDocument):
            return NotImplemented
        decl = lambda d: None if d.declarations is None else sorted(d.declarations)
        return (
            decl(self) == decl(other)
            and self.reactions == other.reactions
            and self.init == other.init
            and self.volume == other.volume
        )

    def species(self) -> list[str]:
        names: dict[str, None] = dict.fromkeys(self.declarations or [])
        for r in self.reactions:
            for name, _ in r.reactants + r.products:
                names.setdefault(name)
        for name in self.init:
            names.setdefault(name)
        return list(names)

    def to_crn(self) -> Crn:
        return Crn(
            species=tuple(self.species()),
            reactions=tuple(Reaction(r.reactants, r.products, r.rate) for r in self.reactions),
            volume=self.volume,
        )

    def initial_state(self, crn: Crn | None = None):
        crn = crn or self.to_crn()
        return crn.state(self.init)


def _positive_real(text: str, line: int, col: int) -> float:
    if not re.fullmatch(_REAL, text):
        raise CrnSyntaxError(f"expected a number, got {text!r}", line, col)
    value = float(text)
    if not value > 0:
        raise CrnSyntaxError(f"value must be positive, got {text}", line, col)
    return value


def _parse_side(text: str, line: int, col: int) -> tuple[tuple[str, int], ...]:
    stripped = text.strip()
    if stripped == "0":
        return ()
    if not stripped:
        raise CrnSyntaxError("empty reaction side (use 0 for nothing)", line, col)
    merged: dict[str, int] = {}
    offset = 0
    for part in text.split("+"):
        m = _TERM_RE.match(part)
        if not m:
            raise CrnSyntaxError(f"bad term {part.strip()!r}", line, col + offset)
        n = int(m.group(1)) if m.group(1) else 1
        if n < 1:
            raise CrnSyntaxError("stoichiometry must be positive", line, col + offset)
        merged[m.group(2)] = merged.get(m.group(2), 0) + n
        offset += len(part) + 1
    return tuple(merged.items())


def parse_crn(text: str, strict: bool = False) -> CrnDocument:
    doc = CrnDocument()
    declared: list[str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        raw = raw.rstrip("\r")
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip()) + 1
        body = line.strip()
        if "->" in body:
            arrows = list(_ARROW_RE.finditer(line))
            if len(arrows) != 1:
                raise CrnSyntaxError("expected exactly one '->'", lineno, indent)
            m = arrows[0]
            rate = 1.0
            if m.group(1) is not None:
                rate = _positive_real(m.group(1), lineno, m.start(1) + 1)
            elif re.match(r"->\s*\{", line[m.start():]):
                raise CrnSyntaxError("malformed rate annotation", lineno, m.start() + 1)
            lhs = _parse_side(line[: m.start()], lineno, indent)
            rhs = _parse_side(line[m.end():], lineno, m.end() + 1)
            doc.reactions.append(ParsedReaction(lhs, rhs, rate))
            continue
        if body.startswith("init"):
            m = _INIT_RE.match(body)
            if not m:
                raise CrnSyntaxError("expected 'init NAME = COUNT'", lineno, indent)
            name, value = m.group(1), m.group(2)
            if not value.isdigit():
                raise CrnSyntaxError(f"init count must be a nonnegative integer, got {value!r}", lineno, indent)
            if name in doc.init:
                raise CrnSyntaxError(f"duplicate init for {name}", lineno, indent)
            doc.init[name] = int(value)
            continue
        if body.startswith("volume"):
            m = _VOLUME_RE.match(body)
            if not m:
                raise CrnSyntaxError("expected 'volume = REAL'", lineno, indent)
            doc.volume = _positive_real(m.group(1), lineno, indent)
            continue
        m = _SPECIES_RE.match(body)
        if m:
            names = m.group(1).split()
            for name in names:
                if not re.fullmatch(_IDENT, name):
                    raise CrnSyntaxError(f"invalid species name {name!r}", lineno, indent)
            declared = (declared or []) + [n for n in names if n not in (declared or [])]
            continue
        word = body.split()[0]
        raise CrnSyntaxError(f"unknown directive {word!r}", lineno, indent)

    doc.declarations = declared
    if strict:
        known = set(declared or [])
        used = [n for r in doc.reactions for n, _ in r.reactants + r.products] + list(doc.init)
        missing = [n for n in dict.fromkeys(used) if n not in known]
        if missing:
            raise CrnSyntaxError(f"undeclared species: {', '.join(missing)}", 1)
    return doc


def _format_real(x: float) -> str:
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


def serialize_crn(doc: CrnDocument) -> str:
    """Canonical text: sorted declarations, explicit rates, one reaction per line."""

    def side(terms):
        if not terms:
            return "0"
        return " + ".join(name if n == 1 else f"{n} {name}" for name, n in terms)

    lines = []
    if doc.declarations is not None:
        lines.append("species " + " ".join(sorted(doc.declarations)) if doc.declarations else "species")
    if doc.volume != 1.0:
        lines.append(f"volume = {_format_real(doc.volume)}")
    for r in doc.reactions:
        lines.append(f"{side(r.reactants)} ->{{{_format_real(r.rate)}}} {side(r.products)}")
    for name, n in doc.init.items():
        lines.append(f"init {name} = {n}")
    return "\n".join(lines) + "\n"


def document_from_crn(crn: Crn, init=None) -> CrnDocument:
    """Document that declares every species of ``crn`` (keeps zero-count species)."""
    doc = CrnDocument(
        declarations=crn.names,
        reactions=[ParsedReaction(r.reactants, r.products, r.rate) for r in crn.reactions],
        volume=crn.volume,
    )
    if init is not None:
        doc.init = {k: v for k, v in crn.as_dict(init).items() if v}
    return doc


def load_crn(path, strict: bool = False) -> CrnDocument:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_crn(fh.read(), strict=strict)
