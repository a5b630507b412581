import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multitrait_bn.averaging import (ArcStrengthTable, arc_strengths, averaged_network,
                                     estimate_threshold, threshold_l1)
from multitrait_bn.errors import ConfigError, GraphError
from multitrait_bn.graph import SNP, TRAIT, Dag, Node


def brute_force_threshold(strengths):
    """Oracle: integrate |F - p_t| piece by piece using midpoint values of F."""
    s = sorted(strengths)
    m = len(s)
    cands = sorted(set(s))
    edges = sorted(set([0.0, 1.0] + s))
    best = None
    dists = []
    for t in cands:
        p = sum(v < t for v in s) / m
        dist = 0.0
        for a, b in zip(edges, edges[1:]):
            mid = 0.5 * (a + b)
            f = sum(v <= mid for v in s) / m
            dist += abs(f - p) * (b - a)
        dists.append(dist)
        if best is None or dist < best[0] - 1e-12:
            best = (dist, t)
    k = cands.index(best[1])
    return (cands[k - 1] if k > 0 else 0.0), np.array(dists)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 100), min_size=1, max_size=40))
def test_threshold_equals_brute_force(counts):
    # [DERIVED] brute-force integration over all candidate cut-offs
    strengths = [c / 100 for c in counts]
    want, dists = brute_force_threshold(strengths)
    u, dist = threshold_l1(strengths)
    np.testing.assert_allclose(dist, dists, atol=1e-12)
    assert estimate_threshold(strengths) == want


def test_two_clusters_keep_high_cluster():
    high = {("s1", "t"): 1.0, ("s2", "t"): 0.95, ("s3", "t"): 0.9, ("t", "u"): 0.97}
    low = {("s4", "t"): 0.05, ("s5", "t"): 0.1, ("s6", "u"): 0.12, ("s7", "u"): 0.08}
    nodes = tuple(Node(f"s{i}", SNP) for i in range(1, 8)) + (Node("t"), Node("u", TRAIT, 1))
    table = ArcStrengthTable({**high, **low}, 100, nodes)
    t = estimate_threshold(table)
    dag = averaged_network(table, t)
    assert dag.arcs == set(high)
    assert set(dag.snps) == {"s1", "s2", "s3"}


def test_near_uniform_strengths_give_half():
    # [PAPER] anchor: estimated threshold close to 0.5 (reported 0.49)
    strengths = np.arange(1, 101) / 100
    assert abs(estimate_threshold(strengths) - 0.5) <= 0.01 + 1e-12


def test_opposite_arcs_keep_stronger():
    a, b = Node("a"), Node("b")
    table = ArcStrengthTable({("a", "b"): 0.6, ("b", "a"): 0.55}, 20, (a, b))
    assert averaged_network(table, 0.5).arcs == {("a", "b")}


def test_arc_strengths_counts(rng):
    nodes = tuple(Node(x) for x in "abc")
    nets = [Dag(nodes, frozenset({("a", "b")})), Dag(nodes, frozenset({("a", "b"), ("b", "c")})),
            Dag(nodes), Dag(nodes, frozenset({("c", "b")}))]
    t = arc_strengths(nets)
    assert t.arcs == {("a", "b"): 0.5, ("b", "c"): 0.25, ("c", "b"): 0.25}
    assert t.strength("a", "c") == 0.0
    with pytest.raises(GraphError):
        arc_strengths([Dag(nodes), Dag(nodes[:2])])
    with pytest.raises(ConfigError):
        averaged_network(t, 1.5)


def test_strength_csv(tmp_path):
    t = ArcStrengthTable({("b", "c"): 0.25, ("a", "b"): 0.5}, 4)
    t.write_csv(tmp_path / "s.csv", 6)
    assert (tmp_path / "s.csv").read_text() == "parent,child,frequency\na,b,0.5\nb,c,0.25\n"
