import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crnwd.crn import Crn, Reaction
from crnwd.ctmc import (
    ExplorationError, ExploreCaps, enumerate_ctmc, from_rates, prob_eventually_bounded,
    prob_globally_bounded, prob_weak_until, transient,
)
from crnwd.csl.statistical import wilson_interval
from crnwd.designs import LadderSpec, build_oscillator, build_unary_ladder, OscillatorConfig
from crnwd.ssa import SimConfig, sample_on_grid, simulate_ensemble


def test_ladder_enumeration():
    m = build_unary_ladder(LadderSpec(2, 1.0, 1.0, 1))
    c = enumerate_ctmc(m.crn, m.init)
    assert c.n_states == 3
    assert c.n_transitions == 4


def test_no_reactions():
    crn = Crn(species=("A",))
    c = enumerate_ctmc(crn, crn.state(A=2))
    assert c.n_states == 1 and c.n_transitions == 0


def _brute_reach(crn, x0):
    from crnwd.crn import apply_reaction, propensity
    seen, todo = {tuple(x0)}, [tuple(x0)]
    while todo:
        x = todo.pop()
        for j in range(len(crn.reactions)):
            if propensity(crn, j, x) > 0:
                y = tuple(apply_reaction(crn, j, x).tolist())
                if y not in seen:
                    seen.add(y)
                    todo.append(y)
    return seen


def test_oscillator_simplex():
    m = build_oscillator(OscillatorConfig(init_A=1, init_B=1, init_C=1), with_heartbeat=False)
    c = enumerate_ctmc(m.crn, m.init)
    states = {tuple(s) for s in c.states.tolist()}
    assert states == _brute_reach(m.crn, m.init)
    assert all(sum(s) == 3 for s in states)


def test_max_states_exceeded():
    crn = Crn(reactions=(Reaction({}, {"A": 1}, 1.0),))
    with pytest.raises(ExplorationError) as info:
        enumerate_ctmc(crn, crn.state(A=0), ExploreCaps(max_states=50))
    assert info.value.partial_count >= 50


def test_caps_truncate():
    crn = Crn(reactions=(Reaction({}, {"A": 1}, 1.0),))
    c = enumerate_ctmc(crn, crn.state(A=0), ExploreCaps(per_species_cap=5))
    assert c.truncated and c.n_states == 6
    with pytest.raises(Exception):
        transient(c, 1.0)
    assert transient(c, 1.0, allow_truncated=True).sum() <= 1.0


def test_transient_closed_form(decay_chain):
    crn, x0 = decay_chain
    c = enumerate_ctmc(crn, x0)
    b = c.mask(lambda s: s[:, 1] >= 1)
    assert transient(c, 0.0)[c.initial_index] == 1.0
    assert transient(c, 1.0)[b].sum() == pytest.approx(1 - math.exp(-1), abs=1e-8)
    with pytest.raises(ValueError):
        transient(c, -1.0)


def test_bounded_reachability(decay_chain):
    crn, x0 = decay_chain
    c = enumerate_ctmc(crn, x0)
    b = c.states[:, 1] >= 1
    assert float(prob_eventually_bounded(c, b, 1.0)) == pytest.approx(0.6321206, abs=1e-7)
    assert float(prob_globally_bounded(c, ~b, 1.0)) == pytest.approx(math.exp(-1), abs=1e-8)
    assert float(prob_globally_bounded(c, np.ones(c.n_states, bool), 1.0)) == 1.0
    assert float(prob_globally_bounded(c, b, 1.0)) == 0.0
    assert float(prob_eventually_bounded(c, ~b, 5.0)) == 1.0
    assert float(prob_eventually_bounded(c, np.zeros(c.n_states, bool), 5.0)) == 0.0


def test_weak_until():
    crn = Crn(reactions=(Reaction({"A": 1}, {"B": 1}, 1.0), Reaction({"B": 1}, {"C": 1}, 1.0)))
    c = enumerate_ctmc(crn, crn.state(A=1))
    phi = c.states[:, 2] == 0
    psi = c.states[:, 1] >= 1
    assert float(prob_weak_until(c, phi, psi)) == pytest.approx(1.0)
    ones = prob_weak_until(c, np.ones(c.n_states, bool), np.zeros(c.n_states, bool))
    assert np.allclose(ones.per_state, 1.0)


def test_ssa_matches_transient():
    m = build_unary_ladder(LadderSpec(2, 1.0, 1.0, 1))
    c = enumerate_ctmc(m.crn, m.init)
    pi = transient(c, 2.0)
    trajs = simulate_ensemble(m.crn, m.init, SimConfig(t_end=2.0, master_seed=5), 50_000)
    finals = np.array([sample_on_grid(t, 2.0, m.crn)[-1][1] for t in trajs])
    for q in range(c.n_states):
        freq = (finals == c.states[q]).all(axis=1).mean()
        sigma = math.sqrt(pi[q] * (1 - pi[q]) / len(trajs))
        assert abs(freq - pi[q]) < 3 * sigma + 1e-12


def _random_chain(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    edges = [(i, j, float(10 ** rng.uniform(-1, 1))) for i in range(n) for j in range(n)
             if i != j and rng.random() < 0.5]
    return from_rates(n, edges), rng.random(n) < 0.5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 5.0))
def test_transient_is_distribution(seed, t):
    c, _ = _random_chain(seed)
    p = transient(c, t)
    assert abs(p.sum() - 1) < 1e-9
    assert (p >= 0).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 5.0))
def test_duality(seed, t):
    c, inv = _random_chain(seed)
    g = prob_globally_bounded(c, inv, t).per_state
    f = prob_eventually_bounded(c, ~inv, t).per_state
    assert np.allclose(g + f, 1.0, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_eventually_monotone_in_time(seed):
    c, target = _random_chain(seed)
    vals = [float(prob_eventually_bounded(c, target, t)) for t in np.linspace(0, 4, 9)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
