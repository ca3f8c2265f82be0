"""Stochastic chemical reaction networks with mass-action propensities.

A :class:`Crn` is an immutable collection of species and reactions.  States
are plain ``numpy`` int64 vectors indexed by species position, so the same
representation is shared by the simulator, the CTMC enumerator and the
predicate evaluators.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
COUNT_LIMIT = 2**62


class CrnError(ValueError):
    """Structural problem with a CRN, a state or a composition."""


class PreconditionError(CrnError):
    """A reaction was applied to a state that cannot fire it."""


@dataclass(frozen=True)
class Species:
    name: str
    index: int


def _as_terms(terms) -> tuple[tuple[str, int], ...]:
    if isinstance(terms, Mapping):
        terms = terms.items()
    merged: dict[str, int] = {}
    for name, n in terms:
        merged[name] = merged.get(name, 0) + int(n)
    return tuple(merged.items())


@dataclass(frozen=True)
class Reaction:
    """Mass-action reaction ``reactants -> products`` with a rate constant.

    ``reactants`` and ``products`` are tuples of ``(species name, stoichiometry)``
    pairs; a mapping is accepted and normalised on construction.
    """

    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]
    rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "reactants", _as_terms(self.reactants))
        object.__setattr__(self, "products", _as_terms(self.products))
        object.__setattr__(self, "rate", float(self.rate))
        if not (self.rate > 0) or not math.isfinite(self.rate):
            raise CrnError(f"rate constant must be positive and finite, got {self.rate}")
        for name, n in self.reactants + self.products:
            if n < 1:
                raise CrnError(f"stoichiometry of {name} must be >= 1")

    @property
    def order(self) -> int:
        return sum(n for _, n in self.reactants)

    @property
    def species_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for name, _ in self.reactants + self.products:
            seen.setdefault(name)
        return list(seen)

    def __str__(self) -> str:
        def side(terms):
            if not terms:
                return "0"
            return " + ".join(name if n == 1 else f"{n} {name}" for name, n in terms)

        return f"{side(self.reactants)} ->{{{self.rate:g}}} {side(self.products)}"


@dataclass(frozen=True)
class Crn:
    """Species list, reaction list and a (dimensionless) volume.

    Species referenced by reactions but missing from ``species`` are appended
    in first-appearance order, so ``Crn(reactions=[...])`` is enough for small
    hand-written models.
    """

    species: tuple[Species, ...] = ()
    reactions: tuple[Reaction, ...] = ()
    volume: float = 1.0

    def __post_init__(self):
        names = [s.name if isinstance(s, Species) else str(s) for s in self.species]
        for rxn in self.reactions:
            for name in rxn.species_names:
                if name not in names:
                    names.append(name)
        if len(set(names)) != len(names):
            raise CrnError("species names must be unique")
        for name in names:
            if not IDENT_RE.match(name):
                raise CrnError(f"invalid species name {name!r}")
        object.__setattr__(self, "species", tuple(Species(n, i) for i, n in enumerate(names)))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        object.__setattr__(self, "volume", float(self.volume))
        if not self.volume > 0:
            raise CrnError("volume must be positive")

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.species]

    @property
    def n_species(self) -> int:
        return len(self.species)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {s.name: s.index for s in self.species}

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CrnError(f"unknown species {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def state(self, counts: Mapping[str, int] | None = None, **kw: int) -> np.ndarray:
        """Build a state vector; unspecified species are zero."""
        x = np.zeros(self.n_species, dtype=np.int64)
        for name, n in {**(counts or {}), **kw}.items():
            if n < 0:
                raise CrnError(f"negative count for {name}")
            x[self.index(name)] = n
        return x

    def as_dict(self, state: Sequence[int]) -> dict[str, int]:
        state = self.check_state(state)
        return {name: int(n) for name, n in zip(self.names, state)}

    def check_state(self, state) -> np.ndarray:
        x = np.asarray(state, dtype=np.int64)
        if x.shape != (self.n_species,):
            raise CrnError(f"state has shape {x.shape}, expected ({self.n_species},)")
        if (x < 0).any():
            raise CrnError("state has negative counts")
        return x

    # Dense stoichiometry tables, shared by every numeric backend.
    @cached_property
    def reactant_matrix(self) -> np.ndarray:
        m = np.zeros((len(self.reactions), self.n_species), dtype=np.int64)
        for j, rxn in enumerate(self.reactions):
            for name, n in rxn.reactants:
                m[j, self.index(name)] += n
        m.setflags(write=False)
        return m

    @cached_property
    def product_matrix(self) -> np.ndarray:
        m = np.zeros((len(self.reactions), self.n_species), dtype=np.int64)
        for j, rxn in enumerate(self.reactions):
            for name, n in rxn.products:
                m[j, self.index(name)] += n
        m.setflags(write=False)
        return m

    @cached_property
    def change_matrix(self) -> np.ndarray:
        m = self.product_matrix - self.reactant_matrix
        m.setflags(write=False)
        return m

    @cached_property
    def rates(self) -> np.ndarray:
        r = np.array([rxn.rate for rxn in self.reactions], dtype=np.float64)
        r.setflags(write=False)
        return r

    @cached_property
    def kinetic_tables(self):
        """Compact reactant lists ``(species, stoich, count, scale)`` for kernels.

        ``scale`` folds the rate constant, the ``prod(stoich!)`` divisor and the
        volume factor into one float per reaction.
        """
        n_rxn = len(self.reactions)
        width = max([len(r.reactants) for r in self.reactions] + [1])
        spec = np.zeros((n_rxn, width), dtype=np.int64)
        stoich = np.zeros((n_rxn, width), dtype=np.int64)
        count = np.zeros(n_rxn, dtype=np.int64)
        scale = np.zeros(n_rxn, dtype=np.float64)
        for j, rxn in enumerate(self.reactions):
            denom = 1.0
            for i, (name, n) in enumerate(rxn.reactants):
                spec[j, i] = self.index(name)
                stoich[j, i] = n
                denom *= math.factorial(n)
            count[j] = len(rxn.reactants)
            if rxn.order > 1:
                denom *= self.volume ** (rxn.order - 1)
            scale[j] = rxn.rate / denom
        return spec, stoich, count, scale


def _falling(n: int, s: int) -> float:
    out = 1.0
    for j in range(s):
        out *= n - j
    return out


def propensity(crn: Crn, reaction_index: int, state) -> float:
    """Stochastic mass-action propensity of one reaction in ``state``."""
    if not 0 <= reaction_index < len(crn.reactions):
        raise CrnError(f"reaction index {reaction_index} out of range")
    x = crn.check_state(state)
    spec, stoich, count, scale = crn.kinetic_tables
    a = scale[reaction_index]
    for i in range(count[reaction_index]):
        n, s = int(x[spec[reaction_index, i]]), int(stoich[reaction_index, i])
        if n < s:
            return 0.0
        a *= _falling(n, s)
    return float(a)


def propensities(crn: Crn, states: np.ndarray) -> np.ndarray:
    """Vectorised propensities for a batch of states, shape ``(n, n_reactions)``."""
    states = np.atleast_2d(np.asarray(states, dtype=np.int64))
    spec, stoich, count, scale = crn.kinetic_tables
    out = np.broadcast_to(scale, (states.shape[0], len(scale))).copy()
    for j in range(len(scale)):
        for i in range(count[j]):
            n = states[:, spec[j, i]].astype(np.float64)
            for k in range(stoich[j, i]):
                out[:, j] *= np.maximum(n - k, 0.0)
    return out


def apply_reaction(crn: Crn, reaction_index: int, state) -> np.ndarray:
    """Fire one reaction; raises :class:`PreconditionError` if it cannot fire."""
    if not 0 <= reaction_index < len(crn.reactions):
        raise CrnError(f"reaction index {reaction_index} out of range")
    x = crn.check_state(state)
    need = crn.reactant_matrix[reaction_index]
    if (x < need).any():
        raise PreconditionError(
            f"reaction {reaction_index} ({crn.reactions[reaction_index]}) lacks reactants"
        )
    y = x + crn.change_matrix[reaction_index]
    if (y > COUNT_LIMIT).any():
        raise OverflowError("molecule count overflow")
    return y


def merge(crns: Iterable[Crn]) -> Crn:
    """Union of species by name (first appearance order) and concatenated reactions."""
    crns = list(crns)
    if not crns:
        return Crn()
    volumes = {c.volume for c in crns}
    if len(volumes) != 1:
        raise CrnError(f"cannot merge CRNs with different volumes {sorted(volumes)}")
    names: dict[str, None] = {}
    reactions: list[Reaction] = []
    for c in crns:
        for n in c.names:
            names.setdefault(n)
        reactions.extend(c.reactions)
    return Crn(species=tuple(names), reactions=tuple(reactions), volume=volumes.pop())


def embed_state(source: Crn, state, target: Crn) -> np.ndarray:
    """Re-index a state of ``source`` into the species order of ``target``."""
    x = source.check_state(state)
    y = np.zeros(target.n_species, dtype=np.int64)
    for i, name in enumerate(source.names):
        y[target.index(name)] = x[i]
    return y
