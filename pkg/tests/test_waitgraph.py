from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from latchproof.syntax import Perm
from latchproof.waitgraph import (
    PermissionOverflow, WaitGraph, add_arc, combine, is_cyclic, split, try_reset,
)


def G(arcs, perm=Fraction(1)):
    return WaitGraph(frozenset(arcs), Perm(perm, ()))


def test_add_arc():
    g = G([], Fraction(1, 2))
    g2 = add_arc(g, "c2", "c1")
    assert g2.arcs == {("c2", "c1")}
    assert g2.perm == g.perm


def test_add_existing_arc_noop():
    g = add_arc(G([("a", "b")]), "a", "b")
    assert g.arcs == {("a", "b")}


def test_self_arc_is_cyclic():
    g = add_arc(G([]), "c", "c")
    assert is_cyclic(g)


def test_two_cycle():
    assert is_cyclic(G([("c2", "c1"), ("c1", "c2")]))


def test_empty_acyclic():
    assert not is_cyclic(G([]))


def test_dag_not_cyclic():
    assert not is_cyclic(G([("a", "b"), ("b", "c"), ("a", "c")]))


def test_combine_two_halves():
    g = combine(G([("c2", "c1")], Fraction(1, 2)), G([("c1", "c2")], Fraction(1, 2)))
    assert g.arcs == {("c2", "c1"), ("c1", "c2")}
    assert g.perm.is_one


def test_split_duplicates_arcs():
    parts = split(G([("a", "b")]), 2)
    assert len(parts) == 2
    assert all(p.arcs == {("a", "b")} for p in parts)
    assert all(p.perm.frac == Fraction(1, 2) for p in parts)


def test_combine_overflow():
    with pytest.raises(PermissionOverflow):
        combine(G([], Fraction(3, 4)), G([], Fraction(3, 4)))


def test_try_reset():
    assert try_reset(G([("a", "b")])).arcs == frozenset()
    half = G([("a", "b")], Fraction(1, 2))
    assert try_reset(half) == half
    cyc = G([("a", "b"), ("b", "a")])
    assert try_reset(cyc) == cyc


def test_try_reset_idempotent():
    for g in [G([("a", "b")]), G([("a", "b")], Fraction(1, 2)), G([("a", "a")])]:
        assert try_reset(try_reset(g)) == try_reset(g)


def _reaches_itself(arcs, nodes):
    # brute-force reachability: does any node reach itself?
    succ = {n: {b for a, b in arcs if a == n} for n in nodes}
    for start in nodes:
        frontier = set(succ[start])
        seen = set(frontier)
        while frontier:
            if start in frontier:
                return True
            frontier = {m for n in frontier for m in succ[n]} - seen
            seen |= frontier
    return False


def test_cyclic_matches_bruteforce_small():
    """Exhaustive agreement on all directed graphs over 3 nodes (with
    self-loops); the acceptance suite covers up to 5 nodes."""
    nodes = ["a", "b", "c"]
    all_arcs = [(x, y) for x in nodes for y in nodes]
    for bits in range(2 ** len(all_arcs)):
        arcs = frozenset(a for i, a in enumerate(all_arcs) if bits >> i & 1)
        assert is_cyclic(arcs) == _reaches_itself(arcs, nodes), arcs


@given(st.sets(st.tuples(st.sampled_from("abcd"), st.sampled_from("abcd")), max_size=8),
       st.sets(st.tuples(st.sampled_from("abcd"), st.sampled_from("abcd")), max_size=8))
def test_combine_commutative(a1, a2):
    g1, g2 = G(a1, Fraction(1, 4)), G(a2, Fraction(1, 4))
    assert combine(g1, g2) == combine(g2, g1)
