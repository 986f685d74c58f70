"""Policy grammar, evaluation, and oracle-equivalence tests."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import oracle_satisfies, random_tree

from cpsx.errors import ArityError, BadToken, EmptyPolicy, LimitExceeded
from cpsx.policy import (
    Gate,
    Leaf,
    format_policy,
    iter_leaves,
    normalize_attribute,
    parse_policy,
    satisfies,
)

THREE_ATTR_TEXT = "designation:professor department:cs file-type:pdf 3of3"
THREE_ATTRS = {"designation:professor", "department:cs", "file-type:pdf"}


# --- normalization ------------------------------------------------------------

def test_normalization_lowercases_and_strips():
    assert normalize_attribute("  Department:CS ") == "department:cs"


def test_normalization_idempotent_on_examples():
    for raw in ("A.B-c:d_9", "  x  ", "FILE-TYPE:PDF"):
        once = normalize_attribute(raw)
        assert normalize_attribute(once) == once


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-:.", min_size=1, max_size=24))
def test_normalization_idempotent_property(token):
    try:
        once = normalize_attribute(token)
    except BadToken:
        return  # reserved or gate-shaped tokens are rejected, not normalized
    assert normalize_attribute(once) == once


@pytest.mark.parametrize("bad", ["", "   ", "a b", "café", "x$y", "3of3", "12of4", "and", "or"])
def test_normalization_rejects(bad):
    with pytest.raises(BadToken):
        normalize_attribute(bad)


# --- parsing -------------------------------------------------------------------

def test_parse_three_attribute_example():
    tree = parse_policy(THREE_ATTR_TEXT)
    root = tree.root
    assert isinstance(root, Gate)
    assert root.threshold == 3
    assert [c.attr for c in root.children] == [
        "designation:professor",
        "department:cs",
        "file-type:pdf",
    ]


def test_parse_minimal_and_gate():
    tree = parse_policy("a b 2of2")
    assert isinstance(tree.root, Gate)
    assert tree.root.threshold == 2
    assert [c.attr for c in tree.root.children] == ["a", "b"]


def test_parse_nested_postfix():
    tree = parse_policy("a b 1of2 c 2of2")
    root = tree.root
    assert isinstance(root, Gate) and root.threshold == 2
    inner, leaf_c = root.children
    assert isinstance(inner, Gate) and inner.threshold == 1
    assert [c.attr for c in inner.children] == ["a", "b"]
    assert leaf_c.attr == "c"


def test_parse_and_or_sugar():
    t_and = parse_policy("a b and")
    assert isinstance(t_and.root, Gate)
    assert t_and.root.threshold == 2 and len(t_and.root.children) == 2
    t_or = parse_policy("a b or")
    assert t_or.root.threshold == 1 and len(t_or.root.children) == 2


def test_parse_single_leaf():
    tree = parse_policy("department:cs 1of1")
    assert isinstance(tree.root, Gate)
    assert tree.root.children[0].attr == "department:cs"


def test_parse_bare_leaf_policy():
    tree = parse_policy("department:cs")
    assert tree.leaf_count() == 1


@pytest.mark.parametrize(
    "text,err",
    [
        ("", EmptyPolicy),
        ("   ", EmptyPolicy),
        ("a 2of2", ArityError),            # K exceeds stack depth
        ("a b 3of2", ArityError),          # K > N
        ("a b 0of2", ArityError),          # K below 1
        ("a b 2of2 c", ArityError),        # two items left on the stack
        ("a b", ArityError),               # residue > 1 without a gate
        ("2of2", ArityError),              # gate with empty stack
        ("a$ b 2of2", BadToken),
    ],
)
def test_parse_rejects(text, err):
    with pytest.raises(err):
        parse_policy(text)


def test_parse_depth_cap():
    text = "a"
    for _ in range(40):
        text = f"{text} b 2of2"
    with pytest.raises(LimitExceeded):
        parse_policy(text)


def test_parse_leaf_cap():
    text = " ".join(["a"] * 1100) + " 1of1100"
    with pytest.raises(LimitExceeded):
        parse_policy(text)


def test_gate_invariants_enforced_at_construction():
    with pytest.raises(ArityError):
        Gate(threshold=0, children=(Leaf("a"),))
    with pytest.raises(ArityError):
        Gate(threshold=2, children=(Leaf("a"),))
    with pytest.raises(ArityError):
        Gate(threshold=1, children=())


# --- formatting -----------------------------------------------------------------

def test_format_inverse_of_parse_on_and_gate():
    assert format_policy(parse_policy("a b 2of2")) == "a b 2of2"


def test_format_reproduces_three_attribute_example():
    assert format_policy(parse_policy(THREE_ATTR_TEXT)) == THREE_ATTR_TEXT


def test_format_stable():
    tree = parse_policy("a b 1of2 c 2of2")
    assert format_policy(tree) == format_policy(tree)


def test_parse_format_round_trip_random_trees():
    rng = random.Random(7)
    universe = [f"attr:{i}" for i in range(6)]
    for _ in range(1000):
        tree = random_tree(rng, universe)
        again = parse_policy(format_policy(tree))
        assert again.root == tree.root


# --- evaluation ------------------------------------------------------------------

def test_satisfies_three_attribute_example():
    tree = parse_policy(THREE_ATTR_TEXT)
    assert satisfies(tree, frozenset(THREE_ATTRS))
    assert not satisfies(tree, frozenset(THREE_ATTRS - {"department:cs"}))
    assert not satisfies(tree, frozenset())


def test_satisfies_returns_selections_for_chosen_gates():
    tree = parse_policy("a b c 2of3")
    res = satisfies(tree, frozenset({"a", "c"}))
    assert res
    assert res.selections[()] == (0, 2)


def test_selection_tie_break_lowest_index():
    tree = parse_policy("a b c 2of3")
    res = satisfies(tree, frozenset({"a", "b", "c"}))
    assert res.selections[()] == (0, 1)


def test_satisfies_duplicate_leaves():
    tree = parse_policy("a a 2of2")
    assert satisfies(tree, frozenset({"a"}))
    assert not satisfies(tree, frozenset({"b"}))


def test_oracle_equivalence_exhaustive_subsets():
    rng = random.Random(13)
    universe = [f"u{i}" for i in range(4)]
    for _ in range(120):
        tree = random_tree(rng, universe)
        for mask in range(16):
            attrs = frozenset(
                universe[i] for i in range(4) if mask >> i & 1
            )
            got = bool(satisfies(tree, attrs))
            want = oracle_satisfies(tree.root, attrs)
            assert got == want, f"{format_policy(tree)} vs {sorted(attrs)}"


def test_selection_validity_on_random_trees():
    rng = random.Random(29)
    universe = [f"u{i}" for i in range(4)]
    checked = 0
    for _ in range(200):
        tree = random_tree(rng, universe)
        for mask in range(16):
            attrs = frozenset(universe[i] for i in range(4) if mask >> i & 1)
            res = satisfies(tree, attrs)
            if not res:
                continue
            checked += 1
            nodes = {(): tree.root}
            for path, chosen in res.selections.items():
                gate = nodes[path]
                assert isinstance(gate, Gate)
                assert len(chosen) == gate.threshold
                assert len(set(chosen)) == len(chosen)
                for i in chosen:
                    child = gate.children[i]
                    nodes[path + (i,)] = child
                    assert oracle_satisfies(child, attrs)
    assert checked > 100


@settings(max_examples=100)
@given(st.data())
def test_monotonicity(data):
    rng = random.Random(data.draw(st.integers(0, 2**32)))
    universe = [f"u{i}" for i in range(5)]
    tree = random_tree(rng, universe)
    base = data.draw(st.sets(st.sampled_from(universe)))
    extra = data.draw(st.sets(st.sampled_from(universe)))
    if satisfies(tree, frozenset(base)):
        assert satisfies(tree, frozenset(base | extra))


def test_iter_leaves_document_order():
    tree = parse_policy("a b 1of2 c d 2of2 2of2")
    got = [(path, leaf.attr) for path, leaf in iter_leaves(tree.root)]
    assert got == [
        ((0, 0), "a"),
        ((0, 1), "b"),
        ((1, 0), "c"),
        ((1, 1), "d"),
    ]


def test_leaf_attributes_and_count():
    tree = parse_policy("a b 1of2 a 2of2")
    assert tree.leaf_count() == 3
    assert tree.leaf_attributes() == frozenset({"a", "b"})
