import networkx as nx
import numpy as np
import pytest

from conftest import complete_digraph, random_digraph, ring_graph
from models.graph import (DegreeSequenceError, DirectedGraph, EdgeListParseError, InfeasibleSwapError,
                          NotStronglyConnectedError, SccGuard, SwapMove, apply_swap, from_edge_list,
                          is_strongly_connected, neutral_randomize, random_swap, sample_configuration_model,
                          to_edge_list)
from models.neutral import rank_one_neutral
from utils.degrees import powerlaw_degrees


def test_parse_triangle(triangle):
    assert triangle.n == 3
    assert triangle.m == 3
    assert triangle.out_deg.tolist() == [1, 1, 1]
    assert triangle.in_deg.tolist() == [1, 1, 1]


@pytest.mark.parametrize("text", [
    "n 2\n0 0\n",          # self-loop
    "n 4\n0 1\n0 1\n",     # duplicate
    "n 2\n0 2\n",          # vertex out of range
    "0 1\n",               # missing header
    "n 3\n0 1 2\n",        # malformed line
])
def test_parse_errors(text):
    with pytest.raises(EdgeListParseError):
        from_edge_list(text)


def test_edge_list_round_trip_is_canonical():
    text = "# comment\nn 4\n2 3\n0 1\n3 0  # trailing\n1 2\n"
    g = from_edge_list(text)
    out = to_edge_list(g)
    assert out == "n 4\n0 1\n1 2\n2 3\n3 0\n"
    assert from_edge_list(out) == g


def test_apply_swap_example():
    g = DirectedGraph(4, [(0, 1), (2, 3)])
    before_out, before_in = g.out_deg.copy(), g.in_deg.copy()
    apply_swap(g, SwapMove.from_edges((0, 1), (2, 3)))
    assert g.edge_list() == [(0, 3), (2, 1)]
    assert np.array_equal(g.out_deg, before_out)
    assert np.array_equal(g.in_deg, before_in)


def test_apply_swap_rejects_present_edge():
    g = DirectedGraph(4, [(0, 1), (2, 3), (0, 3)])
    with pytest.raises(InfeasibleSwapError):
        g.apply_swap(SwapMove.from_edges((0, 1), (2, 3)))
    assert g.edge_list() == [(0, 1), (0, 3), (2, 3)]


def test_apply_swap_rejects_self_loop_and_missing_edge(triangle):
    with pytest.raises(InfeasibleSwapError):
        triangle.apply_swap(SwapMove.from_edges((0, 1), (1, 2)))  # adds (1, 1)
    with pytest.raises(InfeasibleSwapError):
        triangle.apply_swap(SwapMove.from_edges((1, 0), (2, 0)))


def test_inverse_undoes_swap(chorded, rng):
    g = chorded.copy()
    for _ in range(50):
        mv = random_swap(g, rng)
        if mv is None:
            continue
        g.apply_swap(mv)
        g.apply_swap(mv.inverse())
        assert g == chorded


def test_swap_matrix_has_four_entries():
    delta = SwapMove.from_edges((0, 1), (2, 3)).to_dense(4)
    assert np.count_nonzero(delta) == 4
    assert delta.sum(axis=0).tolist() == [0, 0, 0, 0]
    assert delta.sum(axis=1).tolist() == [0, 0, 0, 0]


def test_strong_connectivity_examples(triangle, path3):
    assert is_strongly_connected(triangle)
    assert not is_strongly_connected(path3)
    assert is_strongly_connected(complete_digraph(4))


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("p", [0.15, 0.3])
def test_strong_connectivity_matches_networkx(seed, p):
    g = random_digraph(12, p, seed)
    oracle = nx.DiGraph()
    oracle.add_nodes_from(range(g.n))
    oracle.add_edges_from(g.edge_list())
    assert is_strongly_connected(g) == nx.is_strongly_connected(oracle)


def test_scc_guard_parse():
    assert SccGuard.parse("auto", 500) == SccGuard("every_swap")
    assert SccGuard.parse("auto", 5000) == SccGuard("every_k", 10)
    guard = SccGuard.parse("every_k:3", 10)
    assert [guard.should_check(t) for t in range(6)] == [False, False, True, False, False, True]
    assert not SccGuard.parse("initial_only", 10).should_check(0)
    with pytest.raises(ValueError):
        SccGuard.parse("sometimes", 10)


def test_configuration_model_forced_degrees(rng):
    g = sample_configuration_model([1, 1, 1], [1, 1, 1], rng)
    assert g.out_deg.tolist() == [1, 1, 1]
    assert g.in_deg.tolist() == [1, 1, 1]
    assert is_strongly_connected(g)


def test_configuration_model_powerlaw_degrees(rng):
    d_out, d_in = powerlaw_degrees(200, 2.5, 2, 40, rng)
    g = sample_configuration_model(d_out, d_in, rng)
    assert np.array_equal(g.out_deg, d_out)
    assert np.array_equal(g.in_deg, d_in)


def test_configuration_model_infeasible(rng):
    with pytest.raises(DegreeSequenceError):
        sample_configuration_model([2, 0], [0, 2], rng)
    with pytest.raises(DegreeSequenceError):
        sample_configuration_model([1, 1], [1, 0], rng)


def test_neutral_randomize_zero_steps(chorded, rng):
    assert neutral_randomize(chorded, 0, rng) == chorded


def test_neutral_randomize_keeps_degrees_and_connectivity(chorded, rng):
    stats = {}
    g = neutral_randomize(chorded, 10 * chorded.m, rng, stats=stats)
    assert np.array_equal(g.out_deg, chorded.out_deg)
    assert np.array_equal(g.in_deg, chorded.in_deg)
    assert is_strongly_connected(g)
    assert stats["accepted"] > 0
    assert set(stats) == {"accepted", "infeasible", "rejected_scc"}


def test_neutral_randomize_every_k_rolls_back_to_connected_state(rng):
    g0 = ring_graph(20, extra=5, seed=3)
    g = neutral_randomize(g0, 400, rng, scc_guard="every_k:7")
    assert is_strongly_connected(g)
    assert np.array_equal(g.out_deg, g0.out_deg)


def test_neutral_randomize_needs_connected_input(path3, rng):
    with pytest.raises(NotStronglyConnectedError):
        neutral_randomize(path3, 10, rng)


def test_rank_one_neutral_matrix():
    neutral = rank_one_neutral([1, 1], [1, 1])
    assert np.allclose(neutral.matrix, [[0.5, 0.5], [0.5, 0.5]])
    assert neutral.leading_eigenvalue == pytest.approx(1.0)
    assert np.linalg.matrix_rank(rank_one_neutral([3, 1, 2], [2, 2, 2]).matrix) == 1
    with pytest.raises(ValueError):
        rank_one_neutral([0, 0], [0, 0])
