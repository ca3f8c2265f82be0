import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crnwd.crn import (
    Crn, CrnError, PreconditionError, Reaction, apply_reaction, embed_state, merge, propensities,
    propensity,
)


def test_bimolecular_propensity():
    crn = Crn(reactions=(Reaction({"A": 1, "C": 1}, {"B": 2, "C": 1}, 1.0),))
    assert propensity(crn, 0, crn.state(A=2, C=3)) == 6.0


def test_empty_reactant_gives_zero():
    crn = Crn(reactions=(Reaction({"X1": 1}, {"X2": 1}, 2.0),))
    assert propensity(crn, 0, crn.state(X1=0, X2=5)) == 0.0


def test_catalyzed_step_propensity():
    crn = Crn(reactions=(Reaction({"X0": 1, "U": 1}, {"X1": 1, "U": 1}, 1.0),))
    assert propensity(crn, 0, crn.state(X0=5, U=4)) == 20.0


def test_homodimer_uses_combinatorial_count():
    crn = Crn(reactions=(Reaction({"A": 2}, {"B": 1}, 3.0),))
    assert propensity(crn, 0, crn.state(A=5)) == pytest.approx(3.0 * 5 * 4 / 2)


def test_volume_scaling():
    crn = Crn(reactions=(Reaction({"A": 1, "B": 1}, {"C": 1}, 2.0),), volume=4.0)
    assert propensity(crn, 0, crn.state(A=3, B=2)) == pytest.approx(2.0 * 6 / 4.0)


def test_propensity_errors():
    crn = Crn(reactions=(Reaction({"A": 1}, {}, 1.0),))
    with pytest.raises(CrnError):
        propensity(crn, 3, crn.state(A=1))
    with pytest.raises(CrnError):
        propensity(crn, 0, [1, 2])


def test_apply_heartbeat_reaction():
    crn = Crn(reactions=(Reaction({"A": 1, "B": 1}, {"B": 2, "H": 1}, 1.0),))
    y = apply_reaction(crn, 0, crn.state(A=3, B=2, H=0))
    assert crn.as_dict(y) == {"A": 2, "B": 3, "H": 1}


def test_apply_decay_and_catalyst():
    crn = Crn(reactions=(Reaction({"H": 1}, {}, 0.1), Reaction({"L1": 1, "H": 1}, {"L0": 1, "H": 1}, 1.0)))
    assert crn.as_dict(apply_reaction(crn, 0, crn.state(H=1)))["H"] == 0
    y = crn.as_dict(apply_reaction(crn, 1, crn.state(L1=1, L0=0, H=2)))
    assert (y["L1"], y["L0"], y["H"]) == (0, 1, 2)


def test_apply_without_reactants_raises():
    crn = Crn(reactions=(Reaction({"A": 2}, {"B": 1}, 1.0),))
    with pytest.raises(PreconditionError):
        apply_reaction(crn, 0, crn.state(A=1))


def test_invalid_reactions():
    with pytest.raises(CrnError):
        Reaction({"A": 1}, {}, 0.0)
    with pytest.raises(CrnError):
        Reaction({"A": 1}, {}, float("inf"))
    with pytest.raises(CrnError):
        Crn(species=("1bad",))
    with pytest.raises(CrnError):
        Crn(species=("A", "A"))


def test_merge_shares_species():
    osc = Crn(reactions=(Reaction({"A": 1, "B": 1}, {"B": 2, "H": 1}, 1.0),))
    decay = Crn(reactions=(Reaction({"H": 1}, {}, 0.1),))
    m = merge([osc, decay])
    assert m.names == ["A", "B", "H"]
    assert len(m.reactions) == 2


def test_merge_identity_and_empty():
    x = Crn(reactions=(Reaction({"X": 1}, {}, 1.0),))
    m = merge([Crn(), x])
    assert m.names == x.names and m.reactions == x.reactions
    assert merge([]).n_species == 0


def test_merge_volume_mismatch():
    with pytest.raises(CrnError):
        merge([Crn(species=("A",), volume=1.0), Crn(species=("B",), volume=2.0)])


def test_embed_state():
    a = Crn(species=("B", "A"))
    b = Crn(species=("A", "C", "B"))
    assert embed_state(a, [2, 5], b).tolist() == [5, 0, 2]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=3, max_size=3))
def test_vectorised_propensities_match_scalar(x):
    crn = Crn(reactions=(Reaction({"A": 1, "B": 1}, {"B": 2}, 1.5), Reaction({"C": 2}, {"A": 1}, 0.5),
                         Reaction({}, {"A": 1}, 2.0)))
    vec = propensities(crn, np.array([x]))[0]
    assert vec == pytest.approx([propensity(crn, j, x) for j in range(3)])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=3, max_size=3))
def test_oscillator_reactions_conserve_total(x):
    crn = Crn(reactions=(Reaction({"A": 1, "B": 1}, {"B": 2}, 1.0), Reaction({"B": 1, "C": 1}, {"C": 2}, 1.0),
                         Reaction({"C": 1, "A": 1}, {"A": 2}, 1.0)))
    for j in range(3):
        assert apply_reaction(crn, j, x).sum() == sum(x)
