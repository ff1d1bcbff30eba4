import numpy as np
import pytest

from conftest import brute_force_cycles, complete_digraph, random_digraph, ring_graph
from models.graph import DirectedGraph
from models.netstats import (AssortativityContext, CommunityTracker, CorePeripheryTracker, CoreSplit, CycleTracker,
                             Partition, community_contrast, core_periphery_contrast, k_cycle_count,
                             swap_delta_S, triangle_count_trace)
from models.proposers import (CycleGrowProposer, GrowCycleError, find_triangle, grow_cycle, is_cycle,
                              plan_cycle_growth, propose_assortativity_swap, propose_community_swap,
                              propose_core_periphery_swap, propose_k_cycle_swap, propose_triangle_swap)


def test_regular_graph_has_no_strict_assortative_move(rng):
    g = DirectedGraph(8, [(i, (i + s) % 8) for i in range(8) for s in (1, 2)])
    ctx = AssortativityContext.from_graph(g)
    assert propose_assortativity_swap(g, ctx, 1, rng, strict=True, max_tries=200) is None
    assert propose_assortativity_swap(g, ctx, 1, rng, strict=False, max_tries=200) is not None


def test_assortative_move_increases_S(skewed, rng):
    ctx = AssortativityContext.from_graph(skewed)
    mv = propose_assortativity_swap(skewed, ctx, 1, rng, max_tries=2000)
    assert mv is not None
    assert skewed.swap_violation(mv) is None
    assert swap_delta_S(skewed, mv) > 0


def test_disassortative_move_decreases_S(chorded, rng):
    ctx = AssortativityContext.from_graph(chorded)
    for _ in range(20):
        mv = propose_assortativity_swap(chorded, ctx, -1, rng)
        if mv is not None:
            assert swap_delta_S(chorded, mv) < 0


def test_community_without_opposite_cross_edges(rng):
    g = DirectedGraph(4, [(0, 2), (1, 3), (0, 1)])
    tracker = CommunityTracker(g, Partition.from_blocks([0, 0, 1, 1]))
    assert not tracker.has_candidates(g)
    assert propose_community_swap(g, tracker, rng) is None


def test_community_move_removes_two_cross_edges(rng):
    g = ring_graph(24, extra=40, seed=2)
    partition = Partition.from_blocks(np.arange(24) % 3)
    tracker = CommunityTracker(g, partition)
    for _ in range(10):
        mv = propose_community_swap(g, tracker, rng)
        if mv is None:
            continue
        cross_before = tracker.cross_edge_count()
        phi_before = community_contrast(g, partition)
        delta = tracker.delta(g, [mv])
        assert delta == 2
        g.apply_swap(mv)
        tracker.apply(g, [mv], delta)
        assert tracker.cross_edge_count() == cross_before - 2
        assert tracker.value == pytest.approx(community_contrast(g, partition), abs=1e-12)
        assert tracker.value > phi_before


def test_core_periphery_without_periphery_edges(star5, rng):
    tracker = CorePeripheryTracker(star5, CoreSplit.by_degree(star5.out_deg))
    assert tracker.ll_count == 0
    assert propose_core_periphery_swap(star5, tracker, rng) is None


def test_core_periphery_move_drains_one_periphery_edge(rng):
    g = ring_graph(30, extra=45, seed=1)
    core = np.arange(30) < 10
    split = CoreSplit(core, ~core)
    tracker = CorePeripheryTracker(g, split)
    accepted = 0
    for _ in range(20):
        mv = propose_core_periphery_swap(g, tracker, rng)
        if mv is None:
            continue
        (_, _), (c, d) = mv.removed
        assert core[c] and core[d]
        before = core_periphery_contrast(g, split)
        ll_before = tracker.ll_count
        delta = tracker.delta(g, [mv])
        g.apply_swap(mv)
        tracker.apply(g, [mv], delta)
        assert tracker.ll_count == ll_before - 1
        assert core_periphery_contrast(g, split) >= before
        accepted += 1
    assert accepted > 0


def test_triangle_swap_on_complete_digraph(rng):
    assert propose_triangle_swap(complete_digraph(5), rng) is None


def test_triangle_swap_closes_triangles(rng):
    g = ring_graph(20, extra=20, seed=4)
    out_deg, in_deg = g.out_deg.copy(), g.in_deg.copy()
    found = propose_triangle_swap(g, rng, max_tries=500)
    assert found is not None
    mv, delta = found
    before = triangle_count_trace(g)
    g.apply_swap(mv)
    assert triangle_count_trace(g) >= before + 1
    assert triangle_count_trace(g) == before + delta
    assert np.array_equal(g.out_deg, out_deg) and np.array_equal(g.in_deg, in_deg)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("k", [3, 4, 5])
def test_k_cycle_swap_against_tuple_oracle(seed, k):
    rng = np.random.Generator(np.random.Philox(seed))
    g = random_digraph(7, 0.35, seed)
    found = propose_k_cycle_swap(g, k, rng, max_tries=200)
    if found is None:
        return
    mv, delta = found
    before = brute_force_cycles(g, k)
    g.apply_swap(mv)
    after = brute_force_cycles(g, k)
    assert after >= before + 1
    assert after - before == delta


def test_k_cycle_swap_on_path(rng):
    g = DirectedGraph(4, [(0, 1), (1, 2), (2, 3)])
    assert propose_k_cycle_swap(g, 3, rng) is None


def _two_triangles():
    return DirectedGraph(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)])


def test_grow_cycle_triangle_to_four_cycle(rng):
    g = _two_triangles()
    moves, grown = plan_cycle_growth(g, [0, 1, 2], rng)
    assert len(moves) == 2
    assert len(grown) == 4
    for mv in moves:
        assert g.swap_violation(mv) is None
        g.apply_swap(mv)
    assert is_cycle(g, grown)
    assert k_cycle_count(g, 4) >= 1
    assert g.out_deg.tolist() == [1] * 6 and g.in_deg.tolist() == [1] * 6


def test_grow_cycle_rejects_non_cycle(rng):
    with pytest.raises(GrowCycleError):
        grow_cycle(_two_triangles(), [0, 1, 3], rng)


def test_grow_cycle_without_fresh_vertex(triangle, rng):
    with pytest.raises(GrowCycleError):
        grow_cycle(triangle, [0, 1, 2], rng)


def test_find_triangle(rng):
    cycle = find_triangle(_two_triangles(), rng)
    assert cycle is not None
    assert is_cycle(_two_triangles(), cycle)
    assert find_triangle(ring_graph(6), rng) is None


def test_cycle_grow_proposer_tracks_working_cycle(rng):
    g = _two_triangles()
    proposer = CycleGrowProposer(CycleTracker(g, 4))
    proposal = proposer.propose(g, rng)
    assert proposal is not None
    assert len(proposal.moves) == 2
    for mv in proposal.moves:
        g.apply_swap(mv)
    proposer.on_accept(proposal)
    assert len(proposer.cycle) == 4
    assert is_cycle(g, proposer.cycle)
