import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freshtrack.graph_seq import (
    Digraph,
    PeriodicGraphSequence,
    certify_joint_strong_connectivity,
    certify_jointly_rooted,
    generate_random_jointly_connected,
    is_rooted_at,
    is_strongly_connected,
    union_graph,
)

FIG1 = PeriodicGraphSequence(
    [Digraph(3, [(1, 2), (2, 3)]), Digraph(3, [(1, 3), (3, 2)])], period_t=2)


def test_union_graph_fig1_window():
    g = union_graph(FIG1, 0, 1)
    assert g.edges == frozenset({(1, 2), (2, 3), (1, 3), (3, 2)})


def test_union_of_static_graph_is_itself():
    g = Digraph(4, [(1, 2), (2, 3), (3, 4), (4, 1)])
    seq = PeriodicGraphSequence([g], period_t=1)
    assert union_graph(seq, 0, 5).edges == g.edges


def test_union_matches_fold_of_sets():
    rng = np.random.default_rng(2)
    graphs = []
    for _ in range(3):
        edges = {(int(i), int(j)) for i, j in rng.integers(1, 5, size=(6, 2)) if i != j}
        graphs.append(Digraph(4, edges))
    seq = PeriodicGraphSequence(graphs, period_t=3)
    expected = set()
    for k in range(2, 8):
        expected |= seq.graph(k).edges
    assert union_graph(seq, 2, 7).edges == expected


def test_union_window_monotone():
    for k2 in range(2, 8):
        smaller = union_graph(FIG1, 0, k2 - 1).edges
        larger = union_graph(FIG1, 0, k2).edges
        assert smaller <= larger


def test_two_cycle_strongly_connected():
    assert is_strongly_connected(Digraph(2, [(1, 2), (2, 1)]))


def test_chain_not_strongly_connected():
    assert not is_strongly_connected(Digraph(3, [(1, 2), (2, 3)]))


def test_scc_matches_pairwise_reachability():
    rng = np.random.default_rng(8)
    for _ in range(25):
        n = int(rng.integers(2, 7))
        # Random tournament: one direction per unordered pair.
        edges = set()
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                edges.add((i, j) if rng.random() < 0.5 else (j, i))
        g = Digraph(n, edges)

        def reach(src):
            out = {v: [] for v in range(1, n + 1)}
            for a, b in edges:
                out[a].append(b)
            seen, stack = {src}, [src]
            while stack:
                for b in out[stack.pop()]:
                    if b not in seen:
                        seen.add(b)
                        stack.append(b)
            return seen

        oracle = all(len(reach(v)) == n for v in range(1, n + 1))
        assert is_strongly_connected(g) == oracle


def test_certify_ring_revealed_one_edge_per_step():
    n = 4
    ring = [(i, i % n + 1) for i in range(1, n + 1)]
    graphs = [Digraph(n, [e]) for e in ring]
    seq = PeriodicGraphSequence(graphs, period_t=n)
    assert certify_joint_strong_connectivity(seq, n, 4 * n)


def test_fig1_not_jointly_strongly_connected():
    # Window union is rooted at node 1, but 2 and 3 never reach back.
    assert not certify_joint_strong_connectivity(FIG1, 2, 10)
    assert certify_jointly_rooted(FIG1, 2, 10, root=1)


def test_static_strongly_connected_t1():
    g = Digraph(3, [(1, 2), (2, 3), (3, 1)])
    seq = PeriodicGraphSequence([g], period_t=1)
    assert certify_joint_strong_connectivity(seq, 1, 7)


def test_chain_rootedness():
    seq = PeriodicGraphSequence([Digraph(3, [(1, 2), (2, 3)])], period_t=1)
    assert certify_jointly_rooted(seq, 1, 5, root=1)
    assert not certify_jointly_rooted(seq, 1, 5, root=3)


def test_random_sequence_t1_every_graph_strongly_connected():
    seq = generate_random_jointly_connected(3, 1, seed=4)
    for k in range(20):
        assert is_strongly_connected(seq.graph(k))


def test_random_sequence_certifies():
    seq = generate_random_jointly_connected(5, 3, seed=7)
    assert certify_joint_strong_connectivity(seq, 3, 300)


def test_random_sequence_deterministic():
    s1 = generate_random_jointly_connected(4, 2, seed=9)
    s2 = generate_random_jointly_connected(4, 2, seed=9)
    for k in range(40):
        assert s1.graph(k).edges == s2.graph(k).edges


def test_random_access_matches_sequential_access():
    s1 = generate_random_jointly_connected(4, 3, seed=12)
    s2 = generate_random_jointly_connected(4, 3, seed=12)
    late = s1.graph(25).edges
    for k in range(30):
        s2.graph(k)
    assert s2.graph(25).edges == late


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 6), t=st.integers(1, 4))
def test_strong_connectivity_implies_rooted_everywhere(seed, n, t):
    seq = generate_random_jointly_connected(n, t, seed=seed)
    horizon = 4 * t
    assert certify_joint_strong_connectivity(seq, t, horizon)
    for root in range(1, n + 1):
        assert certify_jointly_rooted(seq, t, horizon, root)


def test_no_self_loops_stored():
    g = Digraph(3, [(1, 1), (1, 2)])
    assert g.edges == frozenset({(1, 2)})


def test_in_neighbors_sorted():
    g = Digraph(4, [(3, 1), (2, 1), (4, 2)])
    assert g.in_neighbors(1) == [2, 3]
    assert g.in_neighbors(4) == []
