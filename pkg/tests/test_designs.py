import math

import numpy as np
import pytest
from scipy import stats

from crnwd.crn import CrnError, apply_reaction, propensity
from crnwd.csl.formula import Named, eval_state
from crnwd.ctmc import enumerate_ctmc, transient
from crnwd.designs import (
    UNREACHABLE, LadderSpec, MwtConfig, OscillatorConfig, build_catalyzed_ladder, build_composed_demo,
    build_monitored_mwt, build_mwt, build_oscillator, build_recovery, build_unary_ladder,
    fraction_threshold_time, healthy, ladder_first_passage, ladder_mean_first_passage,
    top_rung_occupancy,
)
from crnwd.ssa import SimConfig, sample_on_grid, simulate_ensemble


def test_unary_ladder_shape():
    m = build_unary_ladder(LadderSpec(2, 1.0, 1.0, 7))
    assert len(m.crn.names) == 3 and len(m.crn.reactions) == 4
    assert m.crn.as_dict(m.init) == {"X0": 7, "X1": 0, "X2": 0}


def test_smallest_ladder():
    m = build_unary_ladder(LadderSpec(1, 2.0, 3.0))
    got = {(r.reactants, r.products, r.rate) for r in m.crn.reactions}
    assert got == {((("X0", 1),), (("X1", 1),), 2.0), ((("X1", 1),), (("X0", 1),), 3.0)}


def test_ladder_spec_invariants():
    for bad in [dict(k=0), dict(k=1, u=0), dict(k=1, r=-1), dict(k=1, p=0)]:
        with pytest.raises(ValueError):
            LadderSpec(**bad)


def test_catalyzed_ladder():
    m = build_catalyzed_ladder(LadderSpec(2), up_count=3, reset_count=2)
    assert len(m.crn.reactions) == 4
    assert all(r.rate == 1.0 for r in m.crn.reactions)
    with pytest.raises(CrnError):
        build_catalyzed_ladder(LadderSpec(2), up_catalyst="X1")


def test_catalyzed_matches_unary_rates():
    # state-for-state rate equality for one molecule
    uc, rc = 3, 2
    cat = build_catalyzed_ladder(LadderSpec(3, p=1), up_count=uc, reset_count=rc)
    una = build_unary_ladder(LadderSpec(3, float(uc), float(rc), 1))
    a = enumerate_ctmc(cat.crn, cat.init)
    b = enumerate_ctmc(una.crn, una.init)
    rung = lambda c, names: [tuple(s[[names.index(f"X{i}") for i in range(4)]]) for s in c.states]
    ra, rb = rung(a, cat.crn.names), rung(b, una.crn.names)
    ia = {s: i for i, s in enumerate(ra)}
    perm = [ia[s] for s in rb]
    qa = a.rate_matrix.toarray()[np.ix_(perm, perm)]
    assert np.allclose(qa, b.rate_matrix.toarray())


def test_mwt_structure():
    m = build_mwt(MwtConfig(k_d=3, k_t=4, p_L=50, p_T=50, u_count=10, r_count=5))
    assert len(m.crn.reactions) == 14
    assert m.aliases == {"Y": "L3", "D": "T4"}
    # Y is both the detector top rung and the filter up-catalyst
    ups = [r for r in m.crn.reactions if dict(r.reactants).get("T0")]
    assert "L3" in dict(ups[0].reactants)
    ctx = m.context()
    assert eval_state(Named("Reset"), m.init[None, :], ctx)[0]
    d = m.crn.as_dict(m.init)
    assert (d["L0"], d["T0"], d["U"], d["R"], d["H"], d["T4"]) == (50, 50, 10, 5, 0, 0)


def test_mwt_predicate_defaults():
    cfg = MwtConfig(p_L=5, p_T=5)
    assert (cfg.y_hi, cfg.y_lo, cfg.d_hi, cfg.cut) == (3, 1, 3, 1)
    with pytest.raises(ValueError):
        MwtConfig(reset_fraction=0)
    with pytest.raises(ValueError):
        MwtConfig(u_count=0)


def test_heartbeats_lower_detector_top():
    cfg = MwtConfig(k_d=2, k_t=1, p_L=2, p_T=1)
    with_h = build_monitored_mwt(cfg, pool=2, on_rate=5.0, off_rate=0.1)
    plain = build_mwt(cfg)
    times = [0.5, 1.0, 2.0, 4.0]

    def top(model):
        c = enumerate_ctmc(model.crn, model.init)
        y = c.states[:, model.crn.index("L2")]
        return np.array([transient(c, t) @ y for t in times])

    assert (top(with_h) < top(plain)).all()


def test_oscillator():
    cfg = OscillatorConfig.from_total(1000, (80, 10, 10))
    m = build_oscillator(cfg)
    assert m.crn.as_dict(m.init) == {"A": 800, "B": 100, "C": 100, "H": 0}
    assert len(m.crn.reactions) == 4
    first = m.crn.reactions[0]
    assert dict(first.reactants) == {"A": 1, "B": 1} and dict(first.products) == {"B": 2, "H": 1}
    bare = build_oscillator(cfg, with_heartbeat=False)
    assert "H" not in bare.crn.names and len(bare.crn.reactions) == 3


def test_recovery():
    cfg = OscillatorConfig()
    crn = build_recovery(cfg)
    assert len(crn.reactions) == 3
    for r in crn.reactions:
        assert dict(r.reactants)["D"] == dict(r.products)["D"] == 1
    x = crn.state(A=5, B=5, C=5, D=0)
    assert all(propensity(crn, j, x) == 0 for j in range(3))
    y = apply_reaction(crn, 2, crn.state(D=1, C=1, A=0))
    assert crn.as_dict(y) == {"A": 1, "B": 0, "C": 0, "D": 1}


def test_composed_demo_shares_h_and_d():
    m = build_composed_demo(OscillatorConfig.from_total(300, k=1 / 300), MwtConfig())
    names = m.crn.names
    assert names.count("H") == 1 and "T3" in names and m.aliases["D"] == "T3"
    assert {"A", "B", "C", "L0", "T0", "U", "R"} <= set(names)
    # H resets the detector, D drives recovery
    resets = [r for r in m.crn.reactions if dict(r.reactants).get("H") and dict(r.products).get("L0")]
    assert resets
    assert sum(1 for r in m.crn.reactions if dict(r.reactants).get("T3") and "A" in dict(r.reactants)) == 1


def test_healthy_predicate():
    assert not healthy({"A": 10, "B": 0, "C": 5}, 0.0)
    assert not healthy({"A": 50, "B": 50, "C": 50}, 1.0)
    assert healthy({"A": 80, "B": 10, "C": 10}, 100.0)
    with pytest.raises(CrnError):
        healthy({"A": 1, "B": 1}, 1.0)


def test_first_passage():
    assert ladder_mean_first_passage(LadderSpec(1, 1.0, 7.0)) == pytest.approx(1.0)
    assert ladder_mean_first_passage(LadderSpec(2, 1.0, 1.0)) == pytest.approx(3.0)
    fp = ladder_first_passage(LadderSpec(2, 1.0, 1.0), [0.0, 1.0, 100.0])
    assert fp.cdf[0] == 0.0 and fp.cdf[-1] == pytest.approx(1.0)


def test_first_passage_matches_independent_solve():
    # frog in the well: T_i = (1 + u T_{i+1} + r T_0) / (u + r)
    k, u, r = 4, 1.3, 0.7
    A = np.zeros((k + 1, k + 1))
    b = np.zeros(k + 1)
    for i in range(k):
        A[i, i] = u + (r if i else 0)
        A[i, i + 1] -= u
        if i:
            A[i, 0] -= r
        b[i] = 1
    A[k, k] = 1
    assert ladder_mean_first_passage(LadderSpec(k, u, r)) == pytest.approx(np.linalg.solve(A, b)[0])


def test_fraction_threshold_time():
    spec = LadderSpec(2, 1.0, 1.0, 1)
    assert fraction_threshold_time(spec, 0.0, 0.9) == 0.0
    t = fraction_threshold_time(spec, 1.0, 0.2)
    step = ladder_mean_first_passage(spec) / 50
    assert top_rung_occupancy(spec, [t])[0] >= 0.2
    assert top_rung_occupancy(spec, [t - step])[0] < 0.2
    # stationary top-rung occupancy is 1/4 for k=2, u=r=1, so half of 100 never gets there
    assert fraction_threshold_time(LadderSpec(2, 1.0, 1.0, 100), 0.5, 0.95) == UNREACHABLE
    assert fraction_threshold_time(spec, 1.0, 0.3) == UNREACHABLE


def test_fraction_threshold_time_against_ssa():
    spec = LadderSpec(2, 1.0, 1.0, 100)
    t = fraction_threshold_time(spec, 0.15, 0.95)
    assert t != UNREACHABLE
    m = build_unary_ladder(spec)
    trajs = simulate_ensemble(m.crn, m.init, SimConfig(t_end=t, master_seed=2), 2000)
    top = m.crn.index("X2")
    hits = np.mean([sample_on_grid(tr, t, m.crn)[-1][1][top] >= 15 for tr in trajs])
    assert hits >= 0.95 - 3 * math.sqrt(0.95 * 0.05 / 2000)


def test_ladder_conservation():
    m = build_unary_ladder(LadderSpec(3, 1.0, 0.5, 9))
    for tr in simulate_ensemble(m.crn, m.init, SimConfig(t_end=20.0, master_seed=4), 20):
        assert (tr.states(m.crn).sum(axis=1) == 9).all()
