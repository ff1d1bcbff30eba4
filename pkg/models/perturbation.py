import numpy as np
import scipy.sparse as sp
from typing import Dict, Iterable, Tuple

from models.graph import DirectedGraph, SwapMove


class SparseSignedMatrix:
    """Integer n x n matrix stored as a dict of its nonzero entries.

    Row and column absolute sums are cached and kept exact on every update.
    """

    def __init__(self, n: int):
        self.n = n
        self.entries: Dict[Tuple[int, int], int] = {}
        self.row_abs = np.zeros(n, dtype=np.int64)
        self.col_abs = np.zeros(n, dtype=np.int64)

    def add(self, i: int, j: int, value: int):
        old = self.entries.get((i, j), 0)
        new = old + value
        if new == 0:
            self.entries.pop((i, j), None)
        else:
            self.entries[(i, j)] = new
        self.row_abs[i] += abs(new) - abs(old)
        self.col_abs[j] += abs(new) - abs(old)

    def add_swap(self, mv: SwapMove, sign: int = 1):
        for u, v in mv.removed:
            self.add(u, v, -sign)
        for u, v in mv.added:
            self.add(u, v, sign)

    @property
    def nnz(self) -> int:
        return len(self.entries)

    @property
    def norm_1(self) -> int:
        return int(self.col_abs.max()) if self.n else 0

    @property
    def norm_inf(self) -> int:
        return int(self.row_abs.max()) if self.n else 0

    def to_dense(self) -> np.ndarray:
        M = np.zeros((self.n, self.n), dtype=np.int64)
        for (i, j), value in self.entries.items():
            M[i, j] = value
        return M

    def to_scipy(self) -> sp.csr_matrix:
        if not self.entries:
            return sp.csr_matrix((self.n, self.n), dtype=np.float64)
        keys = sorted(self.entries)
        rows = np.fromiter((i for i, _ in keys), dtype=np.int64, count=len(keys))
        cols = np.fromiter((j for _, j in keys), dtype=np.int64, count=len(keys))
        vals = np.fromiter((self.entries[k] for k in keys), dtype=np.float64, count=len(keys))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def caches_consistent(self) -> bool:
        dense = np.abs(self.to_dense())
        return (np.array_equal(dense.sum(axis=1), self.row_abs)
                and np.array_equal(dense.sum(axis=0), self.col_abs)
                and 0 not in self.entries.values())


class PerturbationLedger:
    """Cumulative Omega(t) = A(t) - A(0) plus per-vertex swap participation."""

    def __init__(self, n: int):
        self.omega = SparseSignedMatrix(n)
        self.participation = np.zeros(n, dtype=np.int64)
        self.accepted = 0

    def within_budget(self, moves: Iterable[SwapMove], r_budget: int) -> bool:
        extra: Dict[int, int] = {}
        for mv in moves:
            for u in mv.vertices:
                extra[u] = extra.get(u, 0) + 1
        return all(self.participation[u] + k <= r_budget for u, k in extra.items())

    def step(self, mv: SwapMove):
        self.omega.add_swap(mv)
        self.participation[list(mv.vertices)] += 1
        self.accepted += 1

    def unstep(self, mv: SwapMove):
        self.omega.add_swap(mv, sign=-1)
        self.participation[list(mv.vertices)] -= 1
        self.accepted -= 1

    @property
    def s_max(self) -> int:
        return int(self.participation.max()) if len(self.participation) else 0

    def matches(self, current: DirectedGraph, baseline: DirectedGraph) -> bool:
        diff = current.adjacency(np.int64) - baseline.adjacency(np.int64)
        return np.array_equal(diff, self.omega.to_dense())

    def row_col_bound_holds(self) -> bool:
        # sum_j |Omega_uj| <= 2 s(u), and likewise for columns
        return (bool((self.omega.row_abs <= 2 * self.participation).all())
                and bool((self.omega.col_abs <= 2 * self.participation).all()))
