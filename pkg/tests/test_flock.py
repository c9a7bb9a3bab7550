import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bfs_components
from pedflock.classifier import PairScore
from pedflock.flock import (
    FlockAssignment,
    UnionFind,
    cluster_edges,
    detect_flocks,
    flock_summary,
    validate_assignment,
)


def _partition(asg):
    return sorted([list(g) for g in asg.groups] + [[s] for s in asg.singles])


def test_transitive_closure():
    asg = cluster_edges("ABCDE", [("A", "B"), ("B", "C")])
    assert asg.groups == [("A", "B", "C")] and asg.singles == {"D", "E"}


def test_no_edges_all_single():
    asg = cluster_edges([3, 1, 2], [])
    assert asg.groups == [] and asg.singles == {1, 2, 3}


def test_unknown_pid_rejected():
    with pytest.raises(KeyError):
        cluster_edges([1, 2], [(1, 3)])


def test_group_order_and_flock_ids():
    asg = cluster_edges(range(10), [(9, 5), (7, 2), (2, 4)], bin_index=4)
    assert asg.groups == [(2, 4, 7), (5, 9)]
    assert asg.flock_of()[9] == 1 and asg.flock_id(1) == "4:1"


def test_union_find_matches_bfs():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = int(rng.integers(1, 21))
        nodes = list(range(n))
        pairs = list(itertools.combinations(nodes, 2))
        m = int(rng.integers(0, len(pairs) + 1)) if pairs else 0
        edges = [pairs[i] for i in rng.choice(len(pairs), m, replace=False)] if m else []
        assert _partition(cluster_edges(nodes, edges)) == bfs_components(nodes, edges)
        uf = UnionFind(nodes)
        for a, b in edges:
            uf.union(a, b)
        assert sorted(sorted(c) for c in uf.components()) == bfs_components(nodes, edges)


graphs = st.integers(1, 15).flatmap(lambda n: st.tuples(
    st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30)))


@settings(max_examples=60, deadline=None)
@given(graphs, st.randoms(use_true_random=False))
def test_partition_properties(graph, rnd):
    n, edges = graph
    members = set(range(n))
    asg = cluster_edges(members, edges)
    grouped = set().union(*asg.groups) if asg.groups else set()
    assert grouped | asg.singles == members and not grouped & asg.singles
    assert sum(len(g) for g in asg.groups) == len(grouped)
    assert all(len(g) >= 2 for g in asg.groups)
    shuffled = list(edges)
    rnd.shuffle(shuffled)
    shuffled = [(b, a) if rnd.random() < 0.5 else (a, b) for a, b in shuffled]
    again = cluster_edges(members, shuffled)
    assert again.groups == asg.groups and again.singles == asg.singles
    if n >= 2:
        more = cluster_edges(members, edges + [(0, n - 1)])
        assert len(more.singles) <= len(asg.singles)


def test_validate_perfect():
    asg = FlockAssignment(0, [(1, 2), (3, 4, 5)], {6, 7})
    truth = {(1, 2), (3, 4), (3, 5), (4, 5)}
    v = validate_assignment(asg, truth)
    assert all(v[k] == 1.0 for k in ("pair_precision", "pair_recall", "pair_f1", "agent_precision", "agent_recall"))
    assert v["undefined"] == []


def test_validate_all_singles():
    v = validate_assignment(FlockAssignment(0, [], {1, 2, 3}), {(1, 2)})
    assert v["pair_recall"] == 0.0 and v["pair_precision"] == 0.0
    assert "pair_precision" in v["undefined"] and "pair_recall" not in v["undefined"]


def test_validate_matches_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(30):
        members = list(range(12))
        pred_edges = [tuple(sorted(rng.choice(12, 2, replace=False))) for _ in range(5)]
        truth = {tuple(sorted(map(int, rng.choice(12, 2, replace=False)))) for _ in range(6)}
        asg = cluster_edges(members, pred_edges)
        label = {p: k for k, g in enumerate(asg.groups) for p in g}
        tp = fp = fn = 0
        for a in members:
            for b in members:
                if a >= b:
                    continue
                same = a in label and label.get(b) == label[a]
                tp += same and (a, b) in truth
                fp += same and (a, b) not in truth
                fn += (not same) and (a, b) in truth
        v = validate_assignment([asg], truth)
        assert v["counts"]["pair_tp"] == tp and v["counts"]["pair_fp"] == fp and v["counts"]["pair_fn"] == fn
        if tp + fp:
            assert v["pair_precision"] == pytest.approx(tp / (tp + fp))
        if tp + fn:
            assert v["pair_recall"] == pytest.approx(tp / (tp + fn))


def test_flock_summary():
    asgs = [FlockAssignment(0, [tuple(range(25))], set(range(25, 100)))]
    s = flock_summary(asgs, runtime_s=1.5)
    assert (s.total_agents, s.flock_agents, s.flock_percent, s.flocks, s.runtime_s) == (100, 25, 25.0, 1, 1.5)
    empty = flock_summary([])
    assert empty.total_agents == 0 and empty.flock_percent is None


def test_detect_flocks_thresholds_per_bin():
    scores = [PairScore(0, 1, 2, 0.95), PairScore(0, 2, 3, 0.9), PairScore(0, 3, 4, 0.89),
              PairScore(1, 1, 2, 0.5)]
    out = detect_flocks({0: [1, 2, 3, 4], 1: [1, 2], 2: [7]}, scores, 0.9)
    assert [a.bin_index for a in out] == [0, 1, 2]
    assert out[0].groups == [(1, 2, 3)] and out[0].singles == {4}
    assert out[1].groups == [] and out[2].singles == {7}
