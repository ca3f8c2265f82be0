import pytest
from hypothesis import given, settings, strategies as st

from crnwd.parser import CrnSyntaxError, document_from_crn, parse_crn, serialize_crn
from crnwd.designs import MwtConfig, build_mwt


def test_reaction_with_rate():
    doc = parse_crn("A + B ->{2.5} 2 B + H")
    r = doc.reactions[0]
    assert dict(r.reactants) == {"A": 1, "B": 1}
    assert dict(r.products) == {"B": 2, "H": 1}
    assert r.rate == 2.5


def test_default_rate_and_empty_products():
    doc = parse_crn("X1 -> X2\nH ->{0.1} 0\n")
    assert doc.reactions[0].rate == 1.0
    assert doc.reactions[1].products == ()


def test_init_volume_species_and_comments():
    doc = parse_crn("# model\nspecies A B\nvolume = 2\nA ->{3} B  # decay\ninit A = 7\n")
    assert doc.declarations == ["A", "B"]
    assert doc.volume == 2.0
    assert doc.init == {"A": 7}
    crn = doc.to_crn()
    assert crn.as_dict(doc.initial_state(crn)) == {"A": 7, "B": 0}


@pytest.mark.parametrize("text", [
    "A ->{0} B", "A ->{-1} B", "A -> B\ninit A = 1\ninit A = 2", "frobnicate A", "A + -> B",
    "A ->{x} B", "init A = -3",
])
def test_syntax_errors(text):
    with pytest.raises(CrnSyntaxError):
        parse_crn(text)


def test_error_carries_line_and_column():
    with pytest.raises(CrnSyntaxError) as info:
        parse_crn("A -> B\nA ->{0} B")
    assert info.value.line == 2


def test_canonical_form_emits_rates_and_zero():
    text = serialize_crn(parse_crn("X1 -> X2\nH ->{0.1} 0"))
    assert "X1 ->{1} X2" in text
    assert "H ->{0.1} 0" in text


def test_round_trip_mwt():
    m = build_mwt(MwtConfig(k_d=3, k_t=4, p_L=50, p_T=50, u_count=10, r_count=5))
    doc = document_from_crn(m.crn, m.init)
    again = parse_crn(serialize_crn(doc))
    assert again == doc
    assert serialize_crn(again) == serialize_crn(doc)


_name = st.sampled_from(["A", "B", "C", "X0", "X1", "H"])
_side = st.dictionaries(_name, st.integers(1, 3), max_size=3)
_rate = st.floats(0.001, 1000, allow_nan=False).map(lambda x: float(f"{x:.6g}"))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(_side, _side, _rate), min_size=1, max_size=6),
       st.dictionaries(_name, st.integers(1, 100), max_size=3))
def test_round_trip_property(reactions, init):
    def side(d):
        return " + ".join(f"{n} {k}" for k, n in d.items()) or "0"
    text = "\n".join(f"{side(a)} ->{{{r!r}}} {side(b)}" for a, b, r in reactions)
    text += "".join(f"\ninit {k} = {v}" for k, v in init.items())
    doc = parse_crn(text)
    assert parse_crn(serialize_crn(doc)) == doc
