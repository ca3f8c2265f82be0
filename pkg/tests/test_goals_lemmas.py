import dataclasses

import numpy as np
import pytest

from crnwd.crn import PreconditionError
from crnwd.csl.exact import HOLDS, evaluate_exact
from crnwd.csl.formula import Label, PredicateContext, parse_formula, prob_depth, to_text
from crnwd.csl.goals import AD, TF, goal_catalog, leaf_goals, oscillator_goals, theorem_parts
from crnwd.csl.lemmas import (
    LEMMAS, check_lemma, check_refinement_theorem, l7_counterexample, lemma_formulas, random_ctmc,
    run_lemma_suite,
)
from crnwd.ctmc import enumerate_ctmc
from crnwd.params import ClientPolytope, HeartbeatGoalParams, synthesize

CLIENT = ClientPolytope(10.0, 20.0, 0.05, 0.05)
PARAMS = synthesize(CLIENT)
NAMES = ("Hpres", "Hdet", "Reset", "ThL", "ThH", "Alarm")


def test_catalog_shape():
    cat = goal_catalog(PARAMS, CLIENT)
    assert [g.row for g in cat] == list(range(1, 16))
    leaves = leaf_goals(PARAMS, CLIENT)
    assert [g.row for g in leaves] == [4, 5, 9, 10, 11, 12, 13, 14, 15]
    assert sum(g.agent == AD for g in leaves) == 6 and sum(g.agent == TF for g in leaves) == 3
    assert to_text(cat[8].formula) == "Reset"
    # outer P>=1 [ G ... ] around three nested operators
    assert prob_depth(cat[11].formula) == 4


def test_row_14_text():
    g = goal_catalog(PARAMS, CLIENT)[13]
    expect = f"P>=1 [ G (ThH => P>={1 - PARAMS.eta4!r} [ F<={PARAMS.w_th!r} (Alarm | (!ThH)) ]) ]"
    assert parse_formula(expect) == g.formula


def test_oscillator_goals():
    gs = oscillator_goals(HeartbeatGoalParams())
    assert len(gs) == 3
    assert all(f.formula for f in gs)
    assert "hbHigh" in to_text(gs[0].formula) and "healthy" in to_text(gs[1].formula)


def test_lemma9_example(decay_chain):
    crn, x0 = decay_chain
    c = enumerate_ctmc(crn, x0)
    ctx = PredicateContext(tuple(crn.names))
    phi = parse_formula("A + B = 1")
    labels = {"phi": np.ones(c.n_states, bool), "psi": np.zeros(c.n_states, bool),
              "theta": np.zeros(c.n_states, bool)}
    assert check_lemma("L9", c, labels, {"a": 1.0, "t": 1.0}).holds
    assert evaluate_exact(c, parse_formula("P>=1 [ G<=1 (A + B = 1) ]"), ctx).verdict == HOLDS
    assert evaluate_exact(c, phi, ctx).verdict == HOLDS


def test_l7_hand_counterexample():
    c, labels, params = l7_counterexample()
    out = check_lemma("L7", c, labels, params)
    assert not out.holds and out.state == 0
    # the weak until holds with exactly 0.5 but the conclusion has probability 0.118 < a*b
    assert max(out.probabilities.values()) > 0.5 * params["b"]
    assert min(out.probabilities.values()) < 0.5 * params["b"]


def test_lemma_suite_small():
    rep = run_lemma_suite(60, seed=11)
    assert all(rep.count(k) == 0 for k in LEMMAS)
    assert rep.count("L6-mut") > 0


def test_unknown_lemma():
    with pytest.raises(ValueError):
        lemma_formulas("L99", {})


def _labelled_model(rng):
    c, _ = random_ctmc(rng)
    labs = {k: rng.random(c.n_states) < 0.5 for k in NAMES}
    # ThL and ThH are thresholds on one count with low < high, hence disjoint
    labs["ThH"] &= ~labs["ThL"]
    ctx = PredicateContext((), named={k: Label(k) for k in NAMES}, labels=labs)
    return c, ctx


@pytest.mark.parametrize("theorem", ["T3.2", "T3.4"])
def test_conjunctive_theorems_consistent(theorem):
    rng = np.random.default_rng(5)
    for _ in range(40):
        c, ctx = _labelled_model(rng)
        assert check_refinement_theorem(theorem, c, PARAMS, CLIENT, ctx, all_states=True).consistent
    # a single state gives the same answer
    assert check_refinement_theorem(theorem, c, PARAMS, CLIENT, ctx, state=c.n_states - 1).consistent


def test_t34_parts():
    parts = theorem_parts("T3.4", PARAMS, CLIENT)
    assert [p[0] for p in parts] == [g.name for g in goal_catalog(PARAMS, CLIENT) if g.row in (2, 6, 7, 8)]
    with pytest.raises(ValueError):
        theorem_parts("T9", PARAMS, CLIENT)


def test_refinement_precondition():
    c, ctx = _labelled_model(np.random.default_rng(0))
    bad = dataclasses.replace(PARAMS, w_on=PARAMS.g)
    with pytest.raises(PreconditionError, match="constr"):
        check_refinement_theorem("T3.2", c, bad, CLIENT, ctx)
