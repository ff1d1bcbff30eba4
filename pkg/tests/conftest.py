import itertools

import numpy as np
import pytest

from models.graph import DirectedGraph, from_edge_list


def ring_graph(n: int, extra: int = 0, seed: int = 0) -> DirectedGraph:
    """Directed n-cycle plus `extra` random chords, so always strongly connected."""
    rng = np.random.default_rng(seed)
    g = DirectedGraph(n, [(i, (i + 1) % n) for i in range(n)])
    added = 0
    while added < extra:
        u, v = (int(x) for x in rng.integers(n, size=2))
        if u != v and not g.has_edge(u, v):
            g.add_edge(u, v)
            added += 1
    return g


def random_digraph(n: int, p: float, seed: int = 0) -> DirectedGraph:
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    return DirectedGraph(n, zip(*(idx.tolist() for idx in np.nonzero(mask))))


def symmetric_graph(n: int, p: float, seed: int = 0) -> DirectedGraph:
    """Reciprocal pairs only; the adjacency matrix is symmetric."""
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1)
    mask = upper | upper.T
    return DirectedGraph(n, zip(*(idx.tolist() for idx in np.nonzero(mask))))


def complete_digraph(n: int) -> DirectedGraph:
    return DirectedGraph(n, [(u, v) for u in range(n) for v in range(n) if u != v])


def brute_force_cycles(g: DirectedGraph, k: int) -> int:
    closed = 0
    for tup in itertools.permutations(range(g.n), k):
        if all(g.has_edge(tup[i], tup[(i + 1) % k]) for i in range(k)):
            closed += 1
    return closed // k


@pytest.fixture
def triangle():
    return from_edge_list("n 3\n0 1\n1 2\n2 0\n")


@pytest.fixture
def path3():
    return from_edge_list("n 3\n0 1\n1 2\n")


@pytest.fixture
def star5():
    """Hub 0 with reciprocal spokes: no edge between two leaves."""
    return DirectedGraph(5, [e for i in range(1, 5) for e in ((0, i), (i, 0))])


@pytest.fixture
def skewed():
    """Vertex 0 has out-degree 5, vertex 1 out-degree 2, vertex 2 in-degree 1, vertex 3 in-degree 4."""
    return DirectedGraph(8, [(0, 2), (0, 4), (0, 5), (0, 6), (0, 7), (1, 3), (1, 4), (4, 3), (5, 3), (6, 3)])


@pytest.fixture
def chorded():
    return ring_graph(30, extra=45, seed=1)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))
