import time
from math import factorial

import numpy as np
import pytest

from dnls_nfr.trees import (OrderedTree, assign_indices, count_trees, enumerate_trees,
                            parse_tree)


def double_factorial(J):
    # (2J-1)!! = (2J)! / (2^J J!)
    return factorial(2 * J) // (2**J * factorial(J))


@pytest.mark.parametrize("J, expected", [(1, 1), (2, 3), (3, 15), (4, 105), (5, 945), (6, 10395)])
def test_tree_counts(J, expected):
    assert count_trees(J) == expected == double_factorial(J)
    assert len(enumerate_trees(J)) == expected


def test_enumeration_is_fast_and_distinct():
    tic = time.perf_counter()
    trees = enumerate_trees(6)
    assert time.perf_counter() - tic < 10
    assert len({t.chronicle for t in trees}) == len(trees)
    assert len({t.to_string() for t in trees}) == len(trees)


def test_canonical_order_j2():
    assert [t.to_string() for t in enumerate_trees(2)] == [
        "1(2(* * *) * *)", "1(* 2(* * *) *)", "1(* * 2(* * *))"]


def test_chronicle_must_grow_terminals():
    with pytest.raises(ValueError):
        OrderedTree((0,))
    with pytest.raises(ValueError):
        OrderedTree((1, 1))


@pytest.mark.parametrize("J", [1, 2, 3, 4])
def test_string_roundtrip(J):
    for t in enumerate_trees(J):
        assert parse_tree(t.to_string()) == t


@pytest.mark.parametrize("text", ["1(* *)", "1(* * *) *", "2(* * *)", "1(* 3(* * *) *)", "x"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        parse_tree(text)


@pytest.mark.parametrize("J", [1, 2, 3, 4])
def test_structure_invariants(J):
    for t in enumerate_trees(J):
        nodes = set(range(t.n_nodes))
        roots, terms = set(t.roots), set(t.terminals)
        assert len(t.terminals) == 2 * J + 1
        assert roots | terms == nodes and not roots & terms
        # every parental node has exactly three children
        kids = [c for c in range(1, t.n_nodes) if t.parent[c] in roots]
        assert len(kids) == 3 * J
        for r in roots:
            assert sum(t.parent[c] == r for c in nodes) == 3
        # essential terminals partition the terminals
        ess = [c for j in range(1, J + 1) for c in t.essential_terminals(j)]
        assert sorted(ess) == sorted(t.terminals)
        for j in range(1, J + 1):
            path = t.shortest_root_path(j)
            assert path[0] == 1 and path[-1] == j
            assert list(path) == sorted(path)


def test_conjugation_parity():
    t = parse_tree("1(* 2(* 3(* * *) *) *)")
    # generation 2 hangs from node 2 (slot 2 of the root), generation 3 from
    # node 5 (slot 2 of node 2)
    assert t.chronicle == (2, 5)
    expect = {1: False, 2: True, 3: False, 4: True, 5: False, 6: True,
              7: False, 8: True, 9: False}
    assert {c: t.conjugated[c] for c in expect} == expect


def test_worked_example():
    t = enumerate_trees(1)[0]
    a = assign_indices(t, [1, 0, 2])
    assert a.xi[0] == 3
    assert a.mu[0] == 4
    assert np.allclose(a.mu_forms()[:, 0], 4)


@pytest.mark.parametrize("J", [1, 2, 3])
def test_modulation_forms_agree(J):
    rng = np.random.default_rng(J)
    for t in enumerate_trees(J):
        for _ in range(200):
            a = assign_indices(t, rng.integers(-40, 40, size=2 * J + 1) * 0.5)
            f = a.mu_forms()
            scale = np.maximum(np.abs(f[0]), 1.0)
            assert np.all(np.abs(f - f[0]) <= 1e-10 * scale)
            assert np.allclose(a.nu, a.eps * a.mu)
            assert np.allclose(a.nu_tilde, np.cumsum(a.nu))


def test_assign_rejects_wrong_leaf_count():
    with pytest.raises(ValueError):
        assign_indices(enumerate_trees(2)[0], [1, 2, 3])
