import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crnwd.crn import Crn, Reaction
from crnwd.csl.exact import FAILS, HOLDS, UNDECIDED, TOL, Labeller, evaluate_exact
from crnwd.csl.formula import (
    And, Compare, FormulaError, GloballyAll, Healthy, Label, Named, Not, Or, PredicateContext, ProbEventually,
    ProbGlobally, ProbWeakUntil, TrueF, compile_predicate, eval_state, max_time_bound, parse_csl_file,
    parse_formula, prob_depth, to_text,
)
from crnwd.csl.statistical import StatisticalConfigError, evaluate_statistical, wilson_interval
from crnwd.ctmc import ExploreCaps, enumerate_ctmc, from_rates


@pytest.fixture
def chain(decay_chain):
    crn, x0 = decay_chain
    return crn, x0, enumerate_ctmc(crn, x0), PredicateContext(tuple(crn.names))


# --- syntax -------------------------------------------------------------------------


def test_parse_examples():
    f = parse_formula("P>=0.9 [ F<=10.0 (D >= 3) ]")
    assert isinstance(f, ProbEventually) and f.bound == 0.9 and f.time == 10.0
    g = parse_formula("P>=1-eps [ G<=u !Alarm ]", {"eps": 0.1, "u": 3})
    assert isinstance(g, ProbGlobally) and g.bound == pytest.approx(0.9) and g.time == 3
    assert isinstance(g.arg, Not) and g.arg.arg == Named("Alarm")
    w = parse_formula("P>0.2 [ (A + 2*B < 3) W @phi ]")
    assert isinstance(w, ProbWeakUntil) and w.strict and w.right == Label("phi")
    assert isinstance(parse_formula("P>=1 [ G (A = 1) ]"), GloballyAll)


@pytest.mark.parametrize("text", [
    "P>=1.5 [ F<=1 A >= 1 ]", "P>=0.5 [ F<=-1 A >= 1 ]", "P>=x [ F<=1 A >= 1 ]", "A >=", "(A >= 1",
    "P>=0.5 [ F<=1 A >= 1 ] junk",
])
def test_parse_errors(text):
    with pytest.raises(FormulaError):
        parse_formula(text)


def test_csl_file():
    got = parse_csl_file("# c\nfirst: P>=0.5 [ F<=1 (B >= 1) ]\n\nA = 1\n")
    assert [n for n, _ in got] == ["first", "f2"]
    with pytest.raises(FormulaError, match="line 2"):
        parse_csl_file("A = 1\nP>=2 [ F<=1 A = 1 ]")


def test_depth_and_bounds():
    f = parse_formula("P>=1 [ G (Hpres => P>=0.9 [ F<=4 P>=0.5 [ G<=2 !Alarm ] ]) ]")
    assert prob_depth(f) == 3
    assert max_time_bound(f) == 4.0


_atom = st.builds(lambda a, op, n: Compare(((a, 1.0),), op, float(n)),
                  st.sampled_from(["A", "B", "H"]), st.sampled_from([">=", "<=", ">", "<", "=", "!="]),
                  st.integers(0, 9)) | st.sampled_from([Named("Alarm"), Named("healthy"), Label("phi"), TrueF()])
_prob = st.sampled_from([0.0, 0.25, 0.5, 0.9, 1.0])
_time = st.sampled_from([0.0, 0.5, 2.0, 10.0])


def _extend(inner):
    return (st.builds(Not, inner) | st.builds(And, inner, inner) | st.builds(Or, inner, inner)
            | st.builds(lambda b, t, a: ProbEventually(b, t, a), _prob, _time, inner)
            | st.builds(lambda b, t, a: ProbGlobally(b, t, a), _prob, _time, inner)
            | st.builds(lambda b, l, r: ProbWeakUntil(b, l, r), _prob, inner, inner))


@settings(max_examples=200, deadline=None)
@given(st.recursive(_atom, _extend, max_leaves=8))
def test_print_parse_round_trip(f):
    assert parse_formula(to_text(f)) == f


# --- state predicates -------------------------------------------------------------------


def test_compiled_predicate_matches_eval():
    from crnwd.ssa import check_predicate
    ctx = PredicateContext(("A", "B", "C"), named={"hot": Compare((("A", 1.0), ("B", -1.0)), ">", 2.0),
                                                    "healthy": Healthy(3.0)})
    f = parse_formula("(hot | C = 0) & !(B >= 4) & healthy")
    cp = compile_predicate(f, ctx)
    states = np.array([[a, b, c] for a in range(6) for b in range(6) for c in range(3)])
    ref = eval_state(f, states, ctx)
    stack = np.empty(cp.program.shape[0] + 1, bool)
    got = [check_predicate(x, *cp.arrays(), stack) for x in states]
    assert np.array_equal(ref, got)


def test_unknown_names():
    ctx = PredicateContext(("A",))
    with pytest.raises(FormulaError):
        eval_state(parse_formula("Z >= 1"), np.zeros((1, 1), np.int64), ctx)
    with pytest.raises(FormulaError):
        ctx.expand(Named("Alarm"))


# --- exact ----------------------------------------------------------------------------


def test_exact_examples(chain):
    _, _, c, ctx = chain
    r = evaluate_exact(c, parse_formula("P>=0.5 [ F<=1 (B >= 1) ]"), ctx)
    assert r.verdict == HOLDS
    assert r.probabilities["P>=0.5 [ F<=1 (B >= 1) ]"] == pytest.approx(1 - math.exp(-1), abs=1e-8)
    assert evaluate_exact(c, parse_formula("P>=1 [ G (A + B = 1) ]"), ctx).verdict == HOLDS
    assert evaluate_exact(c, parse_formula("P>=0.7 [ F<=1 (B >= 1) ]"), ctx).verdict == FAILS


def test_lemma_39_example(chain):
    _, _, c, ctx = chain
    f = parse_formula("P>=1 [ G<=1 (A + B = 1) ] => (A + B = 1)")
    assert evaluate_exact(c, f, ctx).verdict == HOLDS


def test_globally_all_is_conjunction_over_states():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        edges = [(i, j, 1.0) for i in range(n) for j in range(n) if i != j and rng.random() < 0.5]
        c = from_rates(n, edges)
        lab = rng.random(n) < 0.7
        ctx = PredicateContext((), labels={"phi": lab})
        from crnwd.ctmc import reachable_from
        reach = reachable_from(c, 0)
        got = evaluate_exact(c, GloballyAll(Label("phi")), ctx).verdict == HOLDS
        assert got == bool(lab[reach].all())


def test_truncated_globally_is_undecided():
    crn = Crn(reactions=(Reaction({}, {"A": 1}, 1.0),))
    c = enumerate_ctmc(crn, crn.state(A=0), ExploreCaps(per_species_cap=3))
    r = evaluate_exact(c, parse_formula("P>=1 [ G (A >= 0) ]"), PredicateContext(("A",)))
    assert r.verdict == UNDECIDED and r.truncated


def test_nested_exact():
    # from A: the inner formula holds where B can be reached within 1 with probability >= 0.5
    crn = Crn(reactions=(Reaction({"A": 1}, {"B": 1}, 1.0), Reaction({"B": 1}, {"C": 1}, 2.0)))
    c = enumerate_ctmc(crn, crn.state(A=1))
    ctx = PredicateContext(tuple(crn.names))
    f = parse_formula("P>=0.3 [ F<=2 P>=0.8 [ F<=1 (C >= 1) ] ]")
    r = evaluate_exact(c, f, ctx)
    # inner holds at B (1 - e^-2 = 0.86) and C, fails at A
    p_inner_b = 1 - math.exp(-2)
    assert r.probabilities["P>=0.8 [ F<=1 (C >= 1) ]"] < 0.8
    # outer: probability to reach B within 2 is 1 - e^-2
    assert r.probabilities[to_text(f)] == pytest.approx(p_inner_b, abs=1e-8)
    assert r.verdict == HOLDS


def test_tolerance_boundary(chain):
    _, _, c, ctx = chain
    p = 1 - math.exp(-1)
    assert evaluate_exact(c, ProbEventually(p + TOL / 2, 1.0, parse_formula("B >= 1")), ctx).verdict == HOLDS
    assert evaluate_exact(c, ProbEventually(p + 10 * TOL, 1.0, parse_formula("B >= 1")), ctx).verdict == FAILS


# --- statistical -------------------------------------------------------------------------


def _wilson(k, n, z):
    p = k / n
    c = (p + z * z / (2 * n)) / (1 + z * z / n)
    h = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return c - h, c + h


def test_wilson_interval():
    lo, hi = wilson_interval(30, 100, 0.05)
    assert (lo, hi) == pytest.approx(_wilson(30, 100, 1.959963984540054))
    assert wilson_interval(0, 10)[0] == 0.0 and wilson_interval(10, 10)[1] == 1.0


def test_statistical_examples(chain):
    crn, x0, _, ctx = chain
    f = parse_formula("P>=0.5 [ F<=1 (B >= 1) ]")
    r = evaluate_statistical(crn, x0, f, ctx, runs=10_000, seed=1)
    assert r.verdict == HOLDS
    lo, hi = r.ci[to_text(f)]
    assert lo <= 1 - math.exp(-1) <= hi
    assert evaluate_statistical(crn, x0, parse_formula("P>=0 [ F<=1 (A >= 7) ]"), ctx, runs=100).verdict == HOLDS


def test_straddling_bound_is_undecided(chain):
    crn, x0, _, ctx = chain
    f = ProbEventually(1 - math.exp(-1), 1.0, parse_formula("B >= 1"))
    verdicts = [evaluate_statistical(crn, x0, f, ctx, runs=2000, seed=s).verdict for s in range(10)]
    assert verdicts.count(UNDECIDED) >= 8


def test_horizon_too_short(chain):
    crn, x0, _, ctx = chain
    with pytest.raises(StatisticalConfigError):
        evaluate_statistical(crn, x0, parse_formula("P>=0.5 [ F<=5 (B >= 1) ]"), ctx, runs=10, horizon=1.0)


def test_statistical_weak_until_and_globally(chain):
    crn, x0, c, ctx = chain
    for text in ["P>=0.3 [ G<=1 (A >= 1) ]", "P>=0.5 [ (A >= 1) W (B >= 1) ]"]:
        f = parse_formula(text)
        exact = evaluate_exact(c, f, ctx).probabilities[to_text(f)]
        r = evaluate_statistical(crn, x0, f, ctx, runs=5000, horizon=2.0, seed=3)
        lo, hi = r.ci[to_text(f)]
        assert lo <= exact <= hi


def test_nested_statistical_is_flagged_approximate():
    crn = Crn(reactions=(Reaction({"A": 1}, {"B": 1}, 1.0), Reaction({"B": 1}, {"C": 1}, 2.0)))
    ctx = PredicateContext(tuple(crn.names))
    f = parse_formula("P>=0.3 [ F<=2 P>=0.8 [ F<=1 (C >= 1) ] ]")
    r = evaluate_statistical(crn, crn.state(A=1), f, ctx, runs=400, seed=2, m_sub=100)
    assert r.approximate
    lo, hi = r.ci[to_text(f)]
    # loose: inner labels are themselves estimates
    assert lo - 0.1 <= 1 - math.exp(-2) <= hi + 0.1


def test_statistical_reproducible(chain):
    crn, x0, _, ctx = chain
    f = parse_formula("P>=0.5 [ F<=1 (B >= 1) ]")
    a = evaluate_statistical(crn, x0, f, ctx, runs=1000, seed=9)
    b = evaluate_statistical(crn, x0, f, ctx, runs=1000, seed=9)
    assert a.probabilities == b.probabilities
