import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crnsize.crn import (
    Configuration,
    Crn,
    InvalidReaction,
    InvalidReverse,
    NotApplicable,
    ParseError,
    Reaction,
    apply,
    parse_text,
    read_crn,
    serialize_text,
    write_crn,
)


def test_reaction_is_a_pair_of_multisets():
    a = Reaction({"X": 2, "S": 1}, {"H": 1})
    b = Reaction({"S": 1, "X": 2}, {"H": 1})
    assert a == b and hash(a) == hash(b)
    assert a.delta() == {"S": -1, "X": -2, "H": 1}
    assert str(a) == "S + 2 X -> H"


def test_arity_limits():
    Reaction({"A": 3}, {"B": 3})
    with pytest.raises(InvalidReaction):
        Reaction({"A": 4}, {"B": 1})
    with pytest.raises(InvalidReaction):
        Reaction({}, {"B": 1})
    with pytest.raises(InvalidReaction):
        Reaction({"A": 1, "B": 1}, {"A": 1, "B": 1})


def test_reverse_of_a_degradation_is_invalid():
    with pytest.raises(InvalidReverse):
        Reaction({"A": 1}, {}).reverse()


def test_set_semantics_counts_distinct_reactions():
    r = Reaction({"A": 1}, {"B": 1})
    crn = Crn([r, r, Reaction({"A": 1}, {"B": 1})])
    assert len(crn) == 1
    assert len(crn.add_reversible(r)) == 2


def test_parse_and_serialize_round_trip():
    text = "# counter\n2 X3 + S3 <-> H3\nL -> 2 Y\nA + B -> 0\n"
    crn = parse_text(text)
    assert len(crn) == 4
    assert parse_text(serialize_text(crn)) == crn


@pytest.mark.parametrize("bad", ["A -> ", "A B -> C", "A -> B -> C", "A + 0B -> C", "A"])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        parse_text(bad)


def test_apply_checks_applicability():
    r = Reaction({"A": 2}, {"B": 1})
    c = Configuration.parse("3 A")
    assert apply(c, r) == Configuration.parse("1 A, 1 B")
    with pytest.raises(NotApplicable):
        apply(Configuration.parse("1 A"), r)


def test_configuration_parse_forms():
    assert Configuration.parse("3 R1, 1 S0") == Configuration.parse("3R1 + S0")
    assert Configuration.parse("{}") == Configuration()
    assert Configuration.parse("2 A").covers({"A": 1})
    assert not Configuration.parse("2 A").covers({"B": 1})


names = st.sampled_from(["A", "B", "R1", "S0", "X_1^2", "fam.S_1^0"])
configs = st.dictionaries(names, st.integers(0, 10**30), max_size=5)


@given(configs)
def test_configuration_text_round_trip(counts):
    c = Configuration(counts)
    assert Configuration.parse(str(c)) == c


def test_json_document_round_trip(tmp_path):
    crn = parse_text("S <-> H + 2 X\n")
    path = tmp_path / "net.json"
    write_crn(path, crn, {"leader": "S", "output": "X", "halt": "H"}, note="x")
    back, designated = read_crn(path)
    assert back == crn
    assert designated == {"leader": "S", "output": "X", "halt": "H"}
    assert json.loads(path.read_text())["note"] == "x"


def test_text_file_round_trip(tmp_path):
    crn = parse_text("A + B -> C\nC <-> 2 D\n")
    path = tmp_path / "net.crn"
    write_crn(path, crn)
    assert read_crn(path)[0] == crn


def test_rename_merges_coefficients():
    r = Reaction({"A": 1, "B": 1}, {"C": 1}).rename({"B": "A"})
    assert r == Reaction({"A": 2}, {"C": 1})
