"""Exact CSL checking on an explicit CTMC by bottom-up state labelling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ctmc import (Ctmc, prob_eventually_bounded, prob_globally_bounded, prob_weak_until)
from .formula import (
    And, FalseF, Formula, GloballyAll, Implies, Not, Or, PredicateContext, ProbEventually,
    ProbGlobally, ProbWeakUntil, TrueF, eval_state, is_probabilistic, to_text,
)

HOLDS, FAILS, UNDECIDED = "holds", "fails", "undecided"
# slack for comparing a computed probability with its bound
TOL = 1e-9


@dataclass
class VerificationResult:
    verdict: str
    probabilities: dict[str, float] = field(default_factory=dict)
    mode: str = "exact"
    ci: dict[str, tuple[float, float]] | None = None
    truncated: bool = False
    approximate: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS


def meets(p: np.ndarray | float, bound: float, strict: bool = False):
    p = np.asarray(p)
    if strict:
        return p > bound + TOL
    return p >= bound - TOL


def _can_reach(ctmc: Ctmc, target: np.ndarray) -> np.ndarray:
    """States from which some ``target`` state is reachable (backward BFS)."""
    Rt = ctmc.rate_matrix.T.tocsr()
    seen = target.copy()
    frontier = np.flatnonzero(target)
    while frontier.size:
        pred = np.unique(Rt[frontier].indices)
        pred = pred[~seen[pred]]
        seen[pred] = True
        frontier = pred
    return seen


class Labeller:
    """Memoised per-state satisfaction sets and probability vectors."""

    def __init__(self, ctmc: Ctmc, ctx: PredicateContext):
        self.ctmc = ctmc
        self.ctx = ctx
        self.sat_cache: dict[Formula, np.ndarray] = {}
        self.prob_cache: dict[Formula, np.ndarray] = {}
        self.notes: list[str] = []
        self.undecided = np.zeros(ctmc.n_states, bool)

    def sat(self, f: Formula) -> np.ndarray:
        hit = self.sat_cache.get(f)
        if hit is not None:
            return hit
        out = self._sat(f)
        self.sat_cache[f] = out
        return out

    def _sat(self, f: Formula) -> np.ndarray:
        c = self.ctmc
        if not is_probabilistic(f) and not isinstance(f, (Not, And, Or, Implies)):
            return eval_state(self.ctx.expand(f), c.states, self.ctx)
        if isinstance(f, Not):
            return ~self.sat(f.arg)
        if isinstance(f, And):
            return self.sat(f.left) & self.sat(f.right)
        if isinstance(f, Or):
            return self.sat(f.left) | self.sat(f.right)
        if isinstance(f, Implies):
            return ~self.sat(f.left) | self.sat(f.right)
        if isinstance(f, ProbEventually):
            vec = prob_eventually_bounded(c, self.sat(f.arg), f.time).per_state
        elif isinstance(f, ProbGlobally):
            vec = prob_globally_bounded(c, self.sat(f.arg), f.time).per_state
        elif isinstance(f, ProbWeakUntil):
            vec = prob_weak_until(c, self.sat(f.left), self.sat(f.right)).per_state
        elif isinstance(f, GloballyAll):
            bad = ~self.sat(f.arg)
            vec = (~_can_reach(c, bad)).astype(float)
            if c.truncated:
                self.notes.append(f"{to_text(f)}: CTMC is truncated, states beyond the caps are unknown")
                self.undecided |= vec == 1.0
            self.prob_cache[f] = vec
            return vec == 1.0
        else:
            raise TypeError(f"unsupported formula node {type(f).__name__}")
        self.prob_cache[f] = vec
        return meets(vec, f.bound, f.strict)


def label(ctmc: Ctmc, formula: Formula, ctx: PredicateContext) -> np.ndarray:
    """Boolean satisfaction vector of ``formula`` over all CTMC states."""
    return Labeller(ctmc, ctx).sat(formula)


def evaluate_exact(ctmc: Ctmc, formula: Formula, ctx: PredicateContext,
                   state: int | None = None) -> VerificationResult:
    """Verdict for ``formula`` at ``state`` (default: the initial state).

    Probabilities of every probabilistic subformula at that state are
    reported.  On a truncated CTMC the probabilities are lower bounds and any
    positive ``P>=1 [ G ... ]`` verdict becomes undecided.
    """
    q = ctmc.initial_index if state is None else int(state)
    lab = Labeller(ctmc, ctx)
    sat = lab.sat(formula)
    probs = {to_text(f): float(v[q]) for f, v in lab.prob_cache.items()}
    verdict = HOLDS if sat[q] else FAILS
    if ctmc.truncated and lab.undecided[q] and verdict == HOLDS:
        verdict = UNDECIDED
    notes = list(lab.notes)
    if ctmc.truncated:
        notes.append("truncated state space: probabilities are lower bounds")
    return VerificationResult(verdict, probs, "exact", None, ctmc.truncated, False, notes)
