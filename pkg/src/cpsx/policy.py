"""Threshold access-policy trees.

A policy is written in postfix: attribute tokens push leaves, a gate
token ``KofN`` pops the top N subtrees and pushes a threshold gate that
is satisfied when at least K of them are. ``and`` / ``or`` are sugar for
``2of2`` / ``1of2``. Example::

    designation:professor department:cs file-type:pdf 3of3

All types are immutable; every operation is a pure function, so the
module is safe for unrestricted concurrent use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

from .errors import ArityError, BadToken, EmptyPolicy, LimitExceeded

DEFAULT_MAX_DEPTH = 32
DEFAULT_MAX_LEAVES = 1024

_ATTR_RE = re.compile(r"[a-z0-9_\-:.]+\Z")
_GATE_RE = re.compile(r"(\d+)of(\d+)\Z")


def normalize_attribute(token: str) -> str:
    """Lowercase and validate an attribute token.

    Normalization is idempotent; two attributes are equal iff their
    normalized tokens are byte-equal.
    """
    norm = token.strip().lower()
    if not norm:
        raise BadToken("empty attribute token")
    if not _ATTR_RE.match(norm):
        raise BadToken(f"attribute token {token!r} has characters outside [a-z0-9_\\-:.]")
    if _GATE_RE.match(norm) or norm in ("and", "or"):
        raise BadToken(f"token {token!r} is reserved gate syntax")
    return norm


def normalize_attributes(tokens: Iterable[str]) -> frozenset[str]:
    """Normalize a collection of tokens into a deduplicated attribute set."""
    return frozenset(normalize_attribute(t) for t in tokens)


@dataclass(frozen=True)
class Leaf:
    attr: str


@dataclass(frozen=True)
class Gate:
    threshold: int
    children: tuple["PolicyNode", ...]

    def __post_init__(self) -> None:
        if len(self.children) < 1:
            raise ArityError("gate requires at least one child")
        if not 1 <= self.threshold <= len(self.children):
            raise ArityError(
                f"gate threshold {self.threshold} outside 1..{len(self.children)}"
            )


PolicyNode = Union[Leaf, Gate]


@dataclass(frozen=True)
class PolicyTree:
    """A parsed policy with its canonical postfix text."""

    root: PolicyNode
    source_text: str

    def leaf_count(self) -> int:
        return sum(1 for _ in iter_leaves(self.root))

    def leaf_attributes(self) -> frozenset[str]:
        return frozenset(leaf.attr for _, leaf in iter_leaves(self.root))


def iter_leaves(node: PolicyNode) -> Iterator[tuple[tuple[int, ...], Leaf]]:
    """Yield (path, leaf) pairs in document order.

    The path is the sequence of child indices from the root; it is the
    identity the KEM uses to align per-leaf ciphertext components.
    """
    stack: list[tuple[tuple[int, ...], PolicyNode]] = [((), node)]
    out: list[tuple[tuple[int, ...], Leaf]] = []
    while stack:
        path, n = stack.pop()
        if isinstance(n, Leaf):
            out.append((path, n))
        else:
            for i in reversed(range(len(n.children))):
                stack.append((path + (i,), n.children[i]))
    return iter(out)


def _depth(node: PolicyNode) -> int:
    if isinstance(node, Leaf):
        return 1
    return 1 + max(_depth(c) for c in node.children)


def _check_limits(node: PolicyNode, max_depth: int, max_leaves: int) -> None:
    if _depth(node) > max_depth:
        raise LimitExceeded(f"policy depth exceeds {max_depth}")
    leaves = sum(1 for _ in iter_leaves(node))
    if leaves > max_leaves:
        raise LimitExceeded(f"policy has {leaves} leaves, cap is {max_leaves}")


def parse_policy(
    text: str,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_leaves: int = DEFAULT_MAX_LEAVES,
) -> PolicyTree:
    """Parse postfix policy text into a PolicyTree.

    Raises EmptyPolicy, ArityError, BadToken or LimitExceeded.
    """
    tokens = text.split()
    if not tokens:
        raise EmptyPolicy("policy text contains no tokens")

    stack: list[PolicyNode] = []
    for raw in tokens:
        tok = raw.lower()
        gate = _GATE_RE.match(tok)
        if gate:
            k, n = int(gate.group(1)), int(gate.group(2))
            if k < 1 or n < 1 or k > n:
                raise ArityError(f"bad gate {raw!r}: threshold {k} of {n}")
            if n > len(stack):
                raise ArityError(
                    f"gate {raw!r} wants {n} operands, only {len(stack)} on stack"
                )
            children = tuple(stack[len(stack) - n:])
            del stack[len(stack) - n:]
            stack.append(Gate(k, children))
        elif tok in ("and", "or"):
            if len(stack) < 2:
                raise ArityError(f"{raw!r} wants 2 operands, only {len(stack)} on stack")
            children = tuple(stack[-2:])
            del stack[-2:]
            stack.append(Gate(2 if tok == "and" else 1, children))
        else:
            stack.append(Leaf(normalize_attribute(raw)))

    if len(stack) != 1:
        raise ArityError(f"{len(stack)} items left on parse stack, expected exactly 1")

    root = stack[0]
    _check_limits(root, max_depth, max_leaves)
    return PolicyTree(root=root, source_text=format_node(root))


def format_node(node: PolicyNode) -> str:
    """Deterministic postfix serialization of a policy node."""
    parts: list[str] = []

    def walk(n: PolicyNode) -> None:
        if isinstance(n, Leaf):
            parts.append(n.attr)
        else:
            for c in n.children:
                walk(c)
            parts.append(f"{n.threshold}of{len(n.children)}")

    walk(node)
    return " ".join(parts)


def format_policy(tree: PolicyTree) -> str:
    """Canonical policy text; parse(format(t)) is structurally identical to t."""
    return format_node(tree.root)


def tree_from_root(
    root: PolicyNode,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_leaves: int = DEFAULT_MAX_LEAVES,
) -> PolicyTree:
    """Wrap an already-built node into a PolicyTree, enforcing the caps."""
    _check_limits(root, max_depth, max_leaves)
    return PolicyTree(root=root, source_text=format_node(root))


@dataclass(frozen=True)
class SatisfactionResult:
    """Outcome of evaluating a policy against an attribute set.

    ``selections`` maps the path of every gate on the chosen evaluation
    to the exact ``threshold`` child indices used to satisfy it, picked
    lowest-index-first so transcripts are reproducible. Only gates that
    are part of the winning selection appear.
    """

    satisfied: bool
    selections: Mapping[tuple[int, ...], tuple[int, ...]]

    def __bool__(self) -> bool:
        return self.satisfied


def satisfies(tree: PolicyTree, attrs: frozenset[str] | set[str]) -> SatisfactionResult:
    """Evaluate the tree: a leaf holds iff its attribute is present, a gate
    iff at least ``threshold`` children hold. Total function, never raises."""
    attrset = frozenset(attrs)

    def holds(node: PolicyNode) -> bool:
        if isinstance(node, Leaf):
            return node.attr in attrset
        count = 0
        for c in node.children:
            if holds(c):
                count += 1
                if count >= node.threshold:
                    return True
        return False

    if not holds(tree.root):
        return SatisfactionResult(False, {})

    selections: dict[tuple[int, ...], tuple[int, ...]] = {}

    def select(node: PolicyNode, path: tuple[int, ...]) -> None:
        if isinstance(node, Leaf):
            return
        chosen = []
        for i, c in enumerate(node.children):
            if holds(c):
                chosen.append(i)
                if len(chosen) == node.threshold:
                    break
        selections[path] = tuple(chosen)
        for i in chosen:
            select(node.children[i], path + (i,))

    select(tree.root, ())
    return SatisfactionResult(True, selections)
