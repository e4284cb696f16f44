"""Ordered ternary trees with a growth chronicle.

A tree of generation J starts from a root with three children and is grown
J-1 times, each time by turning one terminal node into a parental node with
three new children.  Node ids follow creation order: the root is 0, and the
children created in generation j are ``3j-2, 3j-1, 3j``.  The child in slot 2
is the conjugated slot.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from math import prod
from typing import NamedTuple

import numpy as np


class Projection(NamedTuple):
    root: int
    children: tuple


@dataclass(frozen=True)
class OrderedTree:
    chronicle: tuple = ()
    """Node ids grown at generations 2..J, in order."""

    def __post_init__(self):
        object.__setattr__(self, "chronicle", tuple(int(a) for a in self.chronicle))
        terminals = {1, 2, 3}
        for j, a in enumerate(self.chronicle, start=2):
            if a not in terminals:
                raise ValueError(f"generation {j}: node {a} is not terminal")
            terminals.remove(a)
            terminals.update((3 * j - 2, 3 * j - 1, 3 * j))

    @property
    def J(self) -> int:
        return len(self.chronicle) + 1

    @property
    def n_nodes(self) -> int:
        return 3 * self.J + 1

    @cached_property
    def roots(self) -> tuple:
        """Parental nodes r^(1..J) in generation order."""
        return (0,) + self.chronicle

    def children(self, j: int) -> tuple:
        """Children of r^(j) (1-based generation)."""
        return (3 * j - 2, 3 * j - 1, 3 * j)

    @cached_property
    def parent(self) -> tuple:
        p = [-1] * self.n_nodes
        for j, r in enumerate(self.roots, start=1):
            for c in self.children(j):
                p[c] = r
        return tuple(p)

    @cached_property
    def generation_of(self) -> dict:
        return {r: j for j, r in enumerate(self.roots, start=1)}

    def slot(self, node: int) -> int:
        """1, 2 or 3 for non-root nodes; 0 for the root."""
        return 0 if node == 0 else (node - 1) % 3 + 1

    @cached_property
    def conjugated(self) -> tuple:
        """True where the path from the root passes an odd number of slot-2 edges."""
        c = [False] * self.n_nodes
        for j, r in enumerate(self.roots, start=1):
            for node in self.children(j):
                c[node] = c[r] ^ (self.slot(node) == 2)
        return tuple(c)

    @cached_property
    def terminals(self) -> tuple:
        """Terminal nodes in left-to-right (planar) order."""
        out = []

        def walk(node):
            j = self.generation_of.get(node)
            if j is None:
                out.append(node)
            else:
                for c in self.children(j):
                    walk(c)

        walk(0)
        return tuple(out)

    def projection(self, j: int) -> Projection:
        """pi_j: r^(j) with its three children."""
        return Projection(self.roots[j - 1], self.children(j))

    def essential_terminals(self, j: int) -> tuple:
        """Children of r^(j) that are terminal in the whole tree."""
        return tuple(c for c in self.children(j) if c not in self.generation_of)

    def shortest_root_path(self, j: int) -> tuple:
        """Generations (j_1 = 1, ..., j_k = j) whose roots lead from r^(1) to r^(j)."""
        path = [j]
        node = self.roots[j - 1]
        while node != 0:
            node = self.parent[node]
            path.append(self.generation_of[node])
        return tuple(reversed(path))

    def grow(self, node: int) -> "OrderedTree":
        return OrderedTree(self.chronicle + (node,))

    def to_string(self) -> str:
        """Nested form: a parental node of generation j prints ``j(a b c)``, a terminal ``*``."""
        def fmt(node):
            j = self.generation_of.get(node)
            if j is None:
                return "*"
            return f"{j}(" + " ".join(fmt(c) for c in self.children(j)) + ")"
        return fmt(0)

    def __str__(self):
        return self.to_string()


_TOKEN = re.compile(r"\s*(\d+\(|\*|\))")


def parse_tree(text: str) -> OrderedTree:
    """Inverse of :meth:`OrderedTree.to_string`."""
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"unexpected input at {pos}: {text[pos:pos + 10]!r}")
        tokens.append(m.group(1))
        pos = m.end()
    it = iter(tokens)
    grown = {}  # generation -> (parent generation, slot)

    def node(parent_gen, slot):
        tok = next(it, None)
        if tok is None:
            raise ValueError("truncated tree string")
        if tok == "*":
            return
        if tok == ")":
            raise ValueError("unexpected ')'")
        j = int(tok[:-1])
        if j in grown:
            raise ValueError(f"generation {j} appears twice")
        grown[j] = (parent_gen, slot)
        for sl in (1, 2, 3):
            node(j, sl)
        if next(it, None) != ")":
            raise ValueError("expected ')'")

    node(None, 0)
    if next(it, None) is not None:
        raise ValueError("trailing input")
    J = len(grown)
    if sorted(grown) != list(range(1, J + 1)) or grown[1] != (None, 0):
        raise ValueError("generations must be 1..J with 1 at the root")
    chron = []
    for j in range(2, J + 1):
        pj, slot = grown[j]
        if pj >= j:
            raise ValueError(f"generation {j} grown from a later generation {pj}")
        chron.append(3 * pj - 3 + slot)
    return OrderedTree(tuple(chron))


def enumerate_trees(J: int) -> list:
    """All generation-J trees in canonical order.

    Canonical order is lexicographic in the sequence of choices, each choice
    being the planar position of the grown terminal at that step.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    level = [OrderedTree()]
    for _ in range(J - 1):
        level = [t.grow(a) for t in level for a in t.terminals]
    return level


def count_trees(J: int) -> int:
    """|T(J)| = (2J-1)!!."""
    return prod(range(1, 2 * J, 2))


@dataclass(frozen=True, eq=False)
class IndexAssignment:
    """Frequencies on every node of a tree, with per-generation modulations.

    ``xi`` is indexed by node id.  ``mu`` is the raw modulation
    ``2 (xi_2 - xi_1)(xi_2 - xi_3)`` of each generation's 4-node projection;
    ``nu = eps * mu`` carries the conjugation state ``eps`` of the parental
    node and is the quantity that enters phases, multipliers and
    restriction predicates.
    """

    tree: OrderedTree
    xi: np.ndarray
    mu: np.ndarray
    eps: np.ndarray

    @property
    def mu_tilde(self):
        return np.cumsum(self.mu)

    @property
    def nu(self):
        return self.eps * self.mu

    @property
    def nu_tilde(self):
        return np.cumsum(self.nu)

    def generation_frequencies(self, j: int):
        r, (a, b, c) = self.tree.projection(j)
        return self.xi[r], self.xi[a], self.xi[b], self.xi[c]

    def mu_forms(self) -> np.ndarray:
        """(3, J) array: definition, first factored form, second factored form."""
        out = np.empty((3, self.tree.J))
        for j in range(1, self.tree.J + 1):
            x, x1, x2, x3 = self.generation_frequencies(j)
            out[0, j - 1] = x**2 - x1**2 + x2**2 - x3**2
            out[1, j - 1] = 2 * (x - x1) * (x - x3)
            out[2, j - 1] = 2 * (x2 - x1) * (x2 - x3)
        return out


def assign_indices(tree: OrderedTree, leaf_frequencies) -> IndexAssignment:
    """Propagate frequencies from terminals (planar order) up to the root.

    Each parental node gets ``xi = xi_1 - xi_2 + xi_3`` from its children.
    """
    leaves = np.asarray(leaf_frequencies, dtype=float)
    if leaves.shape != (len(tree.terminals),):
        raise ValueError(f"need {len(tree.terminals)} leaf frequencies, got {leaves.shape}")
    xi = np.full(tree.n_nodes, np.nan)
    xi[list(tree.terminals)] = leaves
    for j in range(tree.J, 0, -1):
        r, (a, b, c) = tree.projection(j)
        xi[r] = xi[a] - xi[b] + xi[c]
    mu = np.empty(tree.J)
    eps = np.empty(tree.J)
    for j in range(1, tree.J + 1):
        r, (a, b, c) = tree.projection(j)
        mu[j - 1] = 2 * (xi[b] - xi[a]) * (xi[b] - xi[c])
        eps[j - 1] = -1.0 if tree.conjugated[r] else 1.0
    return IndexAssignment(tree, xi, mu, eps)
