"""Empirical harness for the CSL lemmas and the goal refinement theorems.

Each lemma is instantiated on a small CTMC with explicit state labels
``@phi``, ``@psi`` and ``@theta``; premises and conclusion are checked
exactly at every state.  A counterexample is a state where all premises
hold and the conclusion does not.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ctmc import Ctmc, from_rates
from ..crn import PreconditionError
from ..params import ClientPolytope, InternalParams, validate_constraints
from .exact import TOL, Labeller
from .formula import (
    And, Formula, GloballyAll, Implies, Label, Not, Or, PredicateContext, ProbEventually,
    ProbGlobally, ProbWeakUntil, to_text,
)
from .goals import theorem_parts

LEMMAS = ("L6", "L7", "L8", "L9", "L10", "L11", "L12")
MUTANTS = ("L6-mut",)

PHI, PSI, THETA = Label("phi"), Label("psi"), Label("theta")


@dataclass
class LemmaOutcome:
    lemma: str
    holds: bool
    state: int | None = None
    probabilities: dict[str, float] = field(default_factory=dict)
    params: dict[str, float] = field(default_factory=dict)

    def __bool__(self):
        return self.holds


def lemma_formulas(lemma: str, p: dict) -> tuple[list[Formula], Formula, bool]:
    """``(premises, conclusion, side condition)`` for a lemma instantiation.

    ``p`` carries the scalars ``a, b, s, t``; missing ones are unused.
    """
    a, b = p.get("a", 0.0), p.get("b", 0.0)
    s, t = p.get("s", 0.0), p.get("t", 0.0)
    if lemma in ("L6", "L6-mut"):
        prem = ProbEventually(a, s, Or(PHI, ProbEventually(b, t, PSI)))
        bound = a * b if lemma == "L6" else min(a + b, 1.0)
        return [prem], ProbEventually(bound, s + t, Or(PHI, PSI)), True
    if lemma == "L7":
        left = And(PHI, ProbEventually(b, s, Or(Not(PHI), THETA)))
        return [ProbWeakUntil(a, left, PSI)], ProbEventually(a * b, s, Or(PSI, THETA)), True
    if lemma == "L8":
        prem = [ProbGlobally(a, t, THETA), ProbWeakUntil(b, PHI, Not(THETA))]
        return prem, ProbGlobally(max(0.0, a + b - 1.0), t, PHI), True
    if lemma == "L9":
        # bounds below the comparison slack make the premise vacuous
        return [ProbGlobally(a, t, PHI)], PHI, a > TOL
    if lemma == "L10":
        return [ProbEventually(a, t, PHI), GloballyAll(Implies(PHI, PSI))], ProbEventually(a, t, PSI), True
    if lemma == "L11":
        return [ProbEventually(a, s, PHI)], ProbEventually(b, t, PHI), a >= b and s <= t
    if lemma == "L12":
        return [ProbGlobally(a, s, PHI)], ProbGlobally(b, t, PHI), a >= b and s >= t
    raise ValueError(f"unknown lemma {lemma!r}")


def _ctx(ctmc: Ctmc, labels: dict[str, np.ndarray]) -> PredicateContext:
    return PredicateContext(tuple(ctmc.species), labels={k: np.asarray(v, bool) for k, v in labels.items()})


def _globally_all_everywhere(lab: Labeller, f: Formula) -> np.ndarray:
    # a universally quantified premise is a property of the model, not of a state
    return np.full(lab.ctmc.n_states, bool(lab.sat(f.arg).all()))


def check_lemma(lemma: str, ctmc: Ctmc, labels: dict[str, np.ndarray], params: dict) -> LemmaOutcome:
    """Exact check of one lemma instantiation at every state."""
    premises, conclusion, side = lemma_formulas(lemma, params)
    if not side:
        return LemmaOutcome(lemma, True, params=dict(params))
    lab = Labeller(ctmc, _ctx(ctmc, labels))
    ok = np.ones(ctmc.n_states, bool)
    for f in premises:
        ok &= _globally_all_everywhere(lab, f) if isinstance(f, GloballyAll) else lab.sat(f)
    bad = np.flatnonzero(ok & ~lab.sat(conclusion))
    if not bad.size:
        return LemmaOutcome(lemma, True, params=dict(params))
    q = int(bad[0])
    probs = {to_text(f): float(v[q]) for f, v in lab.prob_cache.items()}
    return LemmaOutcome(lemma, False, q, probs, dict(params))


# --- random instances ------------------------------------------------------------


def random_ctmc(rng: np.random.Generator, n_min: int = 2, n_max: int = 6) -> tuple[Ctmc, dict]:
    """Random CTMC with 2..6 states, edge density 0.3..0.8, log-uniform rates
    in [0.1, 10] and random labels ``phi``, ``psi``, ``theta``."""
    n = int(rng.integers(n_min, n_max + 1))
    density = rng.uniform(0.3, 0.8)
    edges = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                edges.append((i, j, float(10.0 ** rng.uniform(-1.0, 1.0))))
    ctmc = from_rates(n, edges)
    labels = {name: rng.random(n) < rng.uniform(0.2, 0.8) for name in ("phi", "psi", "theta")}
    return ctmc, labels


def _frac(rng) -> float:
    # half the draws are tight (premise holds with equality at the chosen state)
    return 1.0 if rng.random() < 0.5 else float(rng.random())


def random_params(lemma: str, ctmc: Ctmc, labels: dict, rng: np.random.Generator) -> tuple[dict, dict]:
    """Random scalars making the premise hold at a randomly chosen state.

    Returns ``(params, labels)``; L10 replaces ``psi`` by ``phi | psi`` so
    the universal premise holds.
    """
    q = int(rng.integers(ctmc.n_states))
    s, t = float(rng.uniform(0.1, 3.0)), float(rng.uniform(0.1, 3.0))
    lab = Labeller(ctmc, _ctx(ctmc, labels))

    def prob(f: Formula) -> float:
        lab.sat(f)
        return float(lab.prob_cache[f][q])

    p: dict[str, float] = {"s": s, "t": t}
    if lemma in ("L6", "L6-mut"):
        p["b"] = float(rng.random())
        p["a"] = _frac(rng) * prob(ProbEventually(0.0, s, Or(PHI, ProbEventually(p["b"], t, PSI))))
    elif lemma == "L7":
        p["b"] = float(rng.random())
        left = And(PHI, ProbEventually(p["b"], s, Or(Not(PHI), THETA)))
        p["a"] = _frac(rng) * prob(ProbWeakUntil(0.0, left, PSI))
    elif lemma == "L8":
        p["a"] = _frac(rng) * prob(ProbGlobally(0.0, t, THETA))
        p["b"] = _frac(rng) * prob(ProbWeakUntil(0.0, PHI, Not(THETA)))
    elif lemma == "L9":
        g = prob(ProbGlobally(0.0, t, PHI))
        p["a"] = _frac(rng) * g if g > TOL else float(rng.uniform(1e-3, 1.0))
    elif lemma == "L10":
        labels = dict(labels, psi=labels["phi"] | labels["psi"])
        p["a"] = _frac(rng) * prob(ProbEventually(0.0, t, PHI))
    elif lemma == "L11":
        p["t"] = s + float(rng.uniform(0.0, 2.0))
        p["a"] = _frac(rng) * prob(ProbEventually(0.0, s, PHI))
        p["b"] = _frac(rng) * p["a"]
    elif lemma == "L12":
        p["t"] = s * float(rng.random())
        p["a"] = _frac(rng) * prob(ProbGlobally(0.0, s, PHI))
        p["b"] = _frac(rng) * p["a"]
    else:
        raise ValueError(f"unknown lemma {lemma!r}")
    return p, labels


@dataclass
class SuiteReport:
    trials: int
    counterexamples: dict[str, list[LemmaOutcome]]

    def count(self, lemma: str) -> int:
        return len(self.counterexamples.get(lemma, []))


def run_lemma_suite(trials: int = 1000, seed: int = 0, lemmas=LEMMAS + MUTANTS) -> SuiteReport:
    """Check every lemma on ``trials`` random CTMCs (one instantiation each)."""
    rng = np.random.default_rng(seed)
    found: dict[str, list[LemmaOutcome]] = {k: [] for k in lemmas}
    for _ in range(trials):
        ctmc, labels = random_ctmc(rng)
        for lemma in lemmas:
            params, labs = random_params(lemma, ctmc, labels, rng)
            out = check_lemma(lemma, ctmc, labs, params)
            if not out.holds:
                found[lemma].append(out)
    return SuiteReport(trials, found)


def l7_counterexample() -> tuple[Ctmc, dict, dict]:
    """Hand-built instance where the weak-until combination lemma fails.

    From q the chain moves to m or to a dead state at rate 1 each; m
    reaches the goal g at rate 0.5.  phi holds at q and m, psi only at g.
    """
    ctmc = from_rates(4, [(0, 1, 1.0), (0, 2, 1.0), (1, 3, 0.5)])
    labels = {"phi": np.array([1, 1, 0, 0], bool), "psi": np.array([0, 0, 0, 1], bool),
              "theta": np.zeros(4, bool)}
    params = {"a": 0.5, "b": float(-np.expm1(-0.5)), "s": 1.0}
    return ctmc, labels, params


# --- refinement theorems -------------------------------------------------------


@dataclass
class RefinementReport:
    theorem: str
    consistent: bool
    parts: list[dict] = field(default_factory=list)


def check_refinement_theorem(theorem: str, ctmc: Ctmc, params: InternalParams,
                             client: ClientPolytope, ctx: PredicateContext,
                             state: int | None = None, all_states: bool = False) -> RefinementReport:
    """Exact check that no state of interest has all subgoals holding while the parent fails.

    The state of interest is ``state`` (default: the initial state), or every
    state when ``all_states`` is set.
    """
    bad = validate_constraints(params, client)
    if bad:
        raise PreconditionError("parameters violate " + ", ".join(c.name for c in bad))
    if all_states:
        q = np.arange(ctmc.n_states)
    else:
        q = np.array([ctmc.initial_index if state is None else int(state)])
    lab = Labeller(ctmc, ctx)
    parts, consistent = [], True
    for name, parents, kids in theorem_parts(theorem, params, client):
        kids_hold = np.logical_and.reduce([lab.sat(f)[q] for f in kids])
        parent_holds = np.logical_and.reduce([lab.sat(f)[q] for f in parents])
        where = q[kids_hold & ~parent_holds]
        consistent &= not where.size
        parts.append({"goal": name, "children_hold": bool(kids_hold.all()),
                      "parent_holds": bool(parent_holds.all()), "violation": bool(where.size),
                      "states": where.tolist()})
    return RefinementReport(theorem, bool(consistent), parts)
