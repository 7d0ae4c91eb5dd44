import json
import random
from fractions import Fraction

import pytest

from cme_exact.reaction_model import (
    DSLSyntaxError,
    Reaction,
    ReactionSystem,
    SystemClass,
    classify,
    parse_dsl,
    parse_initial,
    serialize_dsl,
    system_from_json,
    system_to_json,
)


def test_parse_examples():
    s = parse_dsl("2 A -> 0 A @ 0.025")
    assert s.reactions[0] == Reaction((2,), (0,), Fraction(1, 40))
    s = parse_dsl("0 A -> 1 A @ 50")
    assert s.reactions[0] == Reaction((0,), (1,), Fraction(50))
    s = parse_dsl("A + B -> C @ 1.0")
    assert s.species == ("A", "B", "C")
    assert s.reactions[0] == Reaction((1, 1, 0), (0, 0, 1), Fraction(1))


def test_parse_variants():
    s = parse_dsl("# comment\n∅ → 2 X @ 1/40   # trailing\n\nX ⇀ 0 @ 3e-1\n")
    assert s.species == ("X",)
    assert s.reactions[0] == Reaction((0,), (2,), Fraction(1, 40))
    assert s.reactions[1].rate == Fraction(3, 10)
    assert parse_dsl("A + A -> B @ 1").reactions[0].inputs == (2, 0)


@pytest.mark.parametrize("text,line,col", [
    ("A -> B", 1, 7),
    ("A -> B @ -1", 1, 10),
    ("0 -> 0 @ 1", 1, None),
    ("A -> B @ 1\nA -> @ 2", 2, 6),
    ("A => B @ 1", 1, 3),
])
def test_parse_errors(text, line, col):
    with pytest.raises(DSLSyntaxError) as info:
        parse_dsl(text)
    assert info.value.line == line
    if col is not None:
        assert info.value.col == col


def test_reaction_validation():
    with pytest.raises(ValueError):
        Reaction((0,), (0,), Fraction(1))
    with pytest.raises(ValueError):
        Reaction((1,), (0,), Fraction(-1))
    with pytest.raises(ValueError):
        Reaction((1, 0), (0,), Fraction(1))


def test_initial_validation():
    r = (Reaction((1,), (0,), Fraction(1)),)
    with pytest.raises(ValueError):
        ReactionSystem(("A",), r, {(1,): 0.5})
    with pytest.raises(ValueError):
        ReactionSystem(("A",), r, {(-1,): 1.0})
    s = ReactionSystem(("A",), r)
    assert s.initial == {(0,): 1.0}


def test_classify_examples():
    assert classify(parse_dsl("A -> 0 @ 1\n0 -> 2A @ 1\nA -> 2A @ 1")) is SystemClass.NON_BINARY
    assert classify(parse_dsl("A -> 0 @ 1\n2A -> 0 @ 1\n2A -> A @ 1")) is SystemClass.BINARY_SJ
    assert classify(parse_dsl("2A -> 0 @ 1\n0 -> A @ 1")) is SystemClass.GENERIC
    assert classify(parse_dsl("A -> B @ 1\n0 -> A @ 2")) is SystemClass.SEMILINEAR_MULTI
    assert classify(parse_dsl("A + B -> 0 @ 1")) is SystemClass.GENERIC


CORPUS = [
    "A -> 0 @ 4",
    "0 -> A @ 50",
    "0 -> 2 A @ 25",
    "A -> 2 A @ 1/2",
    "2 A -> 0 @ 1/40",
    "2 A -> A @ 1/10",
    "A -> 0 @ 1\n2 A -> 0 @ 1\n2 A -> A @ 1",
    "A + B -> C @ 1",
    "A + B -> 2 C + A @ 3/7",
    "∅ -> X @ 0.5",
    "X -> ∅ @ 0.125",
    "3 A -> 2 B @ 2",
    "A -> B @ 1\nB -> C @ 2\nC -> A @ 3",
    "Foo_1 + bar -> 2 bar @ 10",
    "A -> A + A @ 1e-3",
    "0 -> A + B @ 1",
    "A + B + C -> 0 @ 1/3",
    "2A -> 3A @ 7",
    "A -> 0 @ 0",
    "X1 -> X2 @ 1\nX2 -> X1 @ 1/2\n0 -> X1 @ 5",
]


@pytest.mark.parametrize("text", CORPUS)
def test_roundtrip(text):
    s = parse_dsl(text)
    again = parse_dsl(serialize_dsl(s), species=s.species)
    assert again.reactions == s.reactions
    assert again.species == s.species


@pytest.mark.parametrize("text", CORPUS)
def test_json_roundtrip(text):
    s = parse_dsl(text)
    s = ReactionSystem(s.species, s.reactions, {tuple([1] * s.nspecies): 0.25,
                                                tuple([2] * s.nspecies): 0.75})
    back = system_from_json(json.dumps(system_to_json(s)))
    assert back.reactions == s.reactions
    assert back.initial == s.initial


def test_json_documented_format():
    data = {"species": ["A"], "reactions": [{"in": {"A": 2}, "out": {}, "rate": 0.025}],
            "initial": {"100": 1.0}}
    s = system_from_json(data)
    assert s.reactions[0] == Reaction((2,), (0,), Fraction(1, 40))
    assert s.initial == {(100,): 1.0}


def test_parse_initial():
    assert parse_initial("100", 1) == {(100,): 1.0}
    assert parse_initial('{"1,2": 0.5, "0,0": 0.5}', 2) == {(1, 2): 0.5, (0, 0): 0.5}
    with pytest.raises(ValueError):
        parse_initial("5", 2)


@pytest.mark.parametrize("seed", range(5))
def test_classify_invariant_under_reordering_and_renaming(seed):
    rng = random.Random(seed)
    lines = ["A -> 0 @ 1", "2 A -> 0 @ 2", "2 A -> A @ 3", "0 -> A @ 1", "A + B -> 0 @ 1", "B -> 2B @ 1"]
    for _ in range(10):
        chosen = rng.sample(lines, rng.randint(1, 3))
        base = classify(parse_dsl("\n".join(chosen)))
        shuffled = chosen[:]
        rng.shuffle(shuffled)
        renamed = [ln.replace("A", "Q").replace("B", "A").replace("Q", "Z") for ln in shuffled]
        assert classify(parse_dsl("\n".join(shuffled))) is base
        assert classify(parse_dsl("\n".join(renamed))) is base
