from fractions import Fraction

import numpy as np
import pytest

from conftest import brute_force_cycles, complete_digraph, random_digraph, ring_graph
from models.graph import DirectedGraph, InfeasibleSwapError, SwapMove, random_swap
from models.netstats import (AssortativityContext, CommunityTracker, CorePeripheryTracker, CoreSplit,
                             CycleCapError, CycleStat, DegenerateStatisticError, Partition, PartitionError,
                             block_counts, community_contrast, core_periphery_contrast, cycles_through_edge,
                             degree_product_sum, k_cycle_count, k_cycle_delta, k_cycle_density,
                             newman_assortativity, swap_delta_S, triangle_count_trace)


def test_assortativity_degenerate_on_cycle():
    g = ring_graph(4)
    with pytest.raises(DegenerateStatisticError):
        newman_assortativity(g)


@pytest.mark.parametrize("p, q", [("out", "in"), ("out", "out"), ("in", "in"), ("in", "out")])
def test_assortativity_matches_pearson(chorded, p, q):
    tails, heads = chorded.edge_arrays()
    x = (chorded.out_deg if p == "out" else chorded.in_deg)[tails]
    y = (chorded.out_deg if q == "out" else chorded.in_deg)[heads]
    oracle = np.corrcoef(x, y)[0, 1]
    value = newman_assortativity(chorded, p, q)
    assert value == pytest.approx(oracle, abs=1e-12)
    assert -1 - 1e-12 <= value <= 1 + 1e-12


def test_degree_product_sum(path3):
    assert degree_product_sum(path3, "out", "in") == 2
    assert degree_product_sum(DirectedGraph(3)) == 0


def test_degree_product_sum_brute_force():
    g = random_digraph(30, 0.2, seed=5)
    total = sum(int(g.out_deg[u]) * int(g.in_deg[v]) for u, v in g.edge_list())
    assert degree_product_sum(g) == total


def test_swap_delta_example(skewed):
    mv = SwapMove.from_edges((0, 2), (1, 3))
    before = degree_product_sum(skewed)
    assert swap_delta_S(skewed, mv) == 9
    skewed.apply_swap(mv)
    assert degree_product_sum(skewed) - before == 9


def test_swap_delta_equal_tail_degrees_is_zero():
    g = DirectedGraph(4, [(0, 1), (2, 3)])
    assert swap_delta_S(g, SwapMove.from_edges((0, 1), (2, 3))) == 0


def test_swap_delta_rejects_infeasible(triangle):
    with pytest.raises(InfeasibleSwapError):
        swap_delta_S(triangle, SwapMove.from_edges((0, 1), (1, 2)))


@pytest.mark.parametrize("p, q", [("out", "in"), ("in", "out")])
def test_swap_delta_matches_recomputation(chorded, rng, p, q):
    g = chorded.copy()
    checked = 0
    while checked < 300:
        mv = random_swap(g, rng)
        if mv is None:
            continue
        before = degree_product_sum(g, p, q)
        delta = swap_delta_S(g, mv, p, q)
        g.apply_swap(mv)
        assert degree_product_sum(g, p, q) - before == delta
        checked += 1


def test_moments_invariant_along_trajectory(chorded, rng):
    g = chorded.copy()
    ctx0 = AssortativityContext.from_graph(g)
    phi0 = ctx0.phi
    for _ in range(200):
        mv = random_swap(g, rng)
        if mv is None:
            continue
        g.apply_swap(mv)
        ctx = AssortativityContext.from_graph(g)
        assert (ctx.mu_T, ctx.mu_H, ctx.var_T, ctx.var_H) == (ctx0.mu_T, ctx0.mu_H, ctx0.var_T, ctx0.var_H)
        assert ctx.phi - phi0 == pytest.approx(ctx0.nu * (ctx.S - ctx0.S) / g.m, abs=1e-10)


def test_swap_delta_sign_matches_phi(chorded, rng):
    g = chorded.copy()
    for _ in range(100):
        mv = random_swap(g, rng)
        if mv is None:
            continue
        delta = swap_delta_S(g, mv)
        before = newman_assortativity(g)
        g.apply_swap(mv)
        assert np.sign(newman_assortativity(g) - before) == np.sign(delta)


def test_community_contrast_examples():
    partition = Partition.from_blocks([0, 0, 1, 1])
    within = DirectedGraph(4, [(0, 1), (1, 0), (2, 3), (3, 2)])
    assert community_contrast(within, partition) == pytest.approx(0.5)
    across = DirectedGraph(4, [(0, 2), (1, 3)])
    assert community_contrast(across, partition) == 0.0


def test_community_contrast_matches_tally():
    g = random_digraph(40, 0.1, seed=8)
    blocks = np.random.default_rng(8).integers(0, 3, size=40)
    blocks[:3] = [0, 1, 2]
    partition = Partition.from_blocks(blocks)
    m = g.m
    e = np.zeros((3, 3))
    for u, v in g.edge_list():
        e[blocks[u], blocks[v]] += 1 / m
    oracle = sum(e[k, k] - e[k, :].sum() * e[:, k].sum() for k in range(3))
    assert community_contrast(g, partition) == pytest.approx(oracle, abs=1e-12)
    assert block_counts(g, partition).sum() == m


def test_partition_validation():
    with pytest.raises(PartitionError):
        Partition(np.array([0, 0, 2]), 3)
    with pytest.raises(PartitionError):
        Partition.from_blocks([0, 1]).check_graph(DirectedGraph(3))


def test_core_periphery_contrast_examples():
    split = CoreSplit(np.array([True, False, False, False]), np.array([False, True, True, True]))
    assert core_periphery_contrast(DirectedGraph(4, [(0, 1), (1, 0)]), split) == 1.0
    assert core_periphery_contrast(DirectedGraph(4, [(1, 2), (2, 3)]), split) == -1.0
    assert core_periphery_contrast(DirectedGraph(4, [(1, 2), (0, 1)]), split) == 0.0


def test_core_split_by_degree():
    split = CoreSplit.by_degree(np.array([1, 5, 3, 5, 2, 1, 1, 1, 1, 1]), core_fraction=0.2)
    assert np.flatnonzero(split.core).tolist() == [1, 3]
    assert split.scope.all()
    tie = CoreSplit.by_degree(np.array([2, 2, 2, 2, 2]), core_fraction=0.2)
    assert np.flatnonzero(tie.core).tolist() == [0]
    assert np.array_equal(CoreSplit.from_partition(tie.to_partition()).core, tie.core)


def test_k_cycle_count_examples(triangle):
    assert k_cycle_count(triangle, 3) == 1
    assert k_cycle_count(complete_digraph(3), 3) == 2
    assert k_cycle_count(complete_digraph(4), 4) == 6
    with pytest.raises(CycleCapError):
        k_cycle_count(triangle, 7)
    with pytest.raises(CycleCapError):
        k_cycle_count(triangle, 2)


@pytest.mark.parametrize("seed", range(100))
def test_k_cycle_count_matches_tuple_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 8))
    g = random_digraph(n, float(rng.uniform(0.2, 0.7)), seed)
    for k in (3, 4, 5):
        if k <= n:
            assert k_cycle_count(g, k) == brute_force_cycles(g, k)


def test_k_cycle_count_relabeling_invariant():
    g = random_digraph(7, 0.45, seed=3)
    perm = np.random.default_rng(3).permutation(7)
    relabeled = DirectedGraph(7, [(int(perm[u]), int(perm[v])) for u, v in g.edge_list()])
    for k in (3, 4, 5):
        assert k_cycle_count(g, k) == k_cycle_count(relabeled, k)


def test_k_cycle_density_examples(triangle):
    assert k_cycle_density(triangle, 3) == 0.5
    assert k_cycle_density(complete_digraph(3), 3) == 1.0
    assert k_cycle_density(DirectedGraph(4), 3) == 0.0
    with pytest.raises(ValueError):
        k_cycle_density(triangle, 4)
    assert CycleStat.of(triangle, 3) == CycleStat(3, 1, 0.5)


@pytest.mark.parametrize("seed", range(100))
def test_triangle_trace_matches_count(seed):
    g = random_digraph(50, 0.08, seed)
    assert triangle_count_trace(g) == k_cycle_count(g, 3)


def test_triangle_trace_examples(triangle):
    assert triangle_count_trace(triangle) == 1
    assert triangle_count_trace(complete_digraph(3)) == 2


def test_cycles_through_edge(triangle):
    assert cycles_through_edge(triangle, 2, 0, 3) == 1
    g = DirectedGraph(3, [(0, 1), (1, 2)])
    assert cycles_through_edge(g, 2, 0, 3) == 1  # the closing edge is absent


@pytest.mark.parametrize("k", [3, 4, 5])
def test_k_cycle_delta_matches_recount(k, rng):
    g = random_digraph(9, 0.35, seed=k)
    for _ in range(40):
        mv = random_swap(g, rng)
        if mv is None:
            continue
        before = k_cycle_count(g, k)
        delta = k_cycle_delta(g, [mv], k)
        assert g.swap_violation(mv) is None  # graph restored
        g.apply_swap(mv)
        assert k_cycle_count(g, k) - before == delta


def test_k_cycle_delta_compound(rng):
    g = random_digraph(9, 0.35, seed=11)
    moves, h = [], g.copy()
    while len(moves) < 3:
        mv = random_swap(h, rng)
        if mv is not None:
            h.apply_swap(mv)
            moves.append(mv)
    assert k_cycle_delta(g, moves, 4) == k_cycle_count(h, 4) - k_cycle_count(g, 4)


def test_community_tracker_follows_recomputation(rng):
    g = ring_graph(24, extra=40, seed=2)
    partition = Partition.from_blocks(np.arange(24) % 3)
    tracker = CommunityTracker(g, partition)
    for _ in range(150):
        mv = random_swap(g, rng)
        if mv is None:
            continue
        delta = tracker.delta(g, [mv])
        g.apply_swap(mv)
        tracker.apply(g, [mv], delta)
        assert np.array_equal(tracker.counts, block_counts(g, partition))
        assert tracker.value == pytest.approx(community_contrast(g, partition), abs=1e-12)
        assert tracker.cross_edge_count() == sum(len(pool) for pool in tracker.cross.values())


def test_core_periphery_tracker_follows_recomputation(rng):
    g = ring_graph(24, extra=40, seed=6)
    split = CoreSplit.by_degree(g.out_deg)
    tracker = CorePeripheryTracker(g, split)
    for _ in range(150):
        mv = random_swap(g, rng)
        if mv is None:
            continue
        delta = tracker.delta(g, [mv])
        before = tracker.ll_count
        g.apply_swap(mv)
        tracker.apply(g, [mv], delta)
        assert tracker.ll_count == before - delta
        assert tracker.value == core_periphery_contrast(g, split)


def test_fraction_arithmetic_is_exact(chorded):
    ctx = AssortativityContext.from_graph(chorded)
    assert isinstance(ctx.mu_T, Fraction)
    assert ctx.mu_T == Fraction(int(chorded.out_deg @ chorded.out_deg), chorded.m)
