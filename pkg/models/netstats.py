import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.graph import DirectedGraph, Edge, EdgePool, InfeasibleSwapError, SwapMove

logger = logging.getLogger(__name__)

MODES = ("out", "in")


class DegenerateStatisticError(ValueError):
    pass


class PartitionError(ValueError):
    pass


class CycleCapError(ValueError):
    pass


def _degrees(g: DirectedGraph, mode: str) -> np.ndarray:
    if mode == "out":
        return g.out_deg
    if mode == "in":
        return g.in_deg
    raise ValueError(f"Degree mode must be 'out' or 'in', got {mode!r}")


@dataclass
class AssortativityContext:
    """Exact moments of the edge sample x = tail p-degree, y = head q-degree.

    Everything except S depends only on the degree sequences, so it is fixed
    along any degree-preserving trajectory.
    """
    p: str
    q: str
    m: int
    sum_x: int
    sum_x2: int
    sum_y: int
    sum_y2: int
    S: int
    tail_deg: np.ndarray
    head_deg: np.ndarray

    @classmethod
    def from_graph(cls, g: DirectedGraph, p: str = "out", q: str = "in") -> "AssortativityContext":
        dp = _degrees(g, p).copy()
        dq = _degrees(g, q).copy()
        return cls(
            p=p, q=q, m=g.m,
            sum_x=int(g.out_deg @ dp),
            sum_x2=int(g.out_deg @ (dp * dp)),
            sum_y=int(g.in_deg @ dq),
            sum_y2=int(g.in_deg @ (dq * dq)),
            S=degree_product_sum(g, p, q),
            tail_deg=dp, head_deg=dq,
        )

    @property
    def mu_T(self) -> Fraction:
        return Fraction(self.sum_x, self.m)

    @property
    def mu_H(self) -> Fraction:
        return Fraction(self.sum_y, self.m)

    @property
    def var_T(self) -> Fraction:
        return Fraction(self.sum_x2, self.m) - self.mu_T ** 2

    @property
    def var_H(self) -> Fraction:
        return Fraction(self.sum_y2, self.m) - self.mu_H ** 2

    @property
    def is_degenerate(self) -> bool:
        return self.m < 2 or self.var_T == 0 or self.var_H == 0

    @property
    def nu(self) -> float:
        if self.is_degenerate:
            raise DegenerateStatisticError(
                f"Assortativity ({self.p},{self.q}) is undefined: a degree sample has zero dispersion")
        return 1.0 / math.sqrt(float(self.var_T) * float(self.var_H))

    @property
    def covariance(self) -> Fraction:
        return Fraction(self.S, self.m) - self.mu_T * self.mu_H

    @property
    def phi(self) -> float:
        return float(self.covariance) * self.nu

    def delta_S(self, mv: SwapMove) -> int:
        (a, b), (c, d) = mv.removed
        return int(self.tail_deg[a] - self.tail_deg[c]) * int(self.head_deg[d] - self.head_deg[b])


def degree_product_sum(g: DirectedGraph, p: str = "out", q: str = "in") -> int:
    if g.m == 0:
        return 0
    tails, heads = g.edge_arrays()
    return int(np.dot(_degrees(g, p)[tails], _degrees(g, q)[heads]))


def newman_assortativity(g: DirectedGraph, p: str = "out", q: str = "in") -> float:
    return AssortativityContext.from_graph(g, p, q).phi


def swap_delta_S(g: DirectedGraph, mv: SwapMove, p: str = "out", q: str = "in") -> int:
    reason = g.swap_violation(mv)
    if reason is not None:
        raise InfeasibleSwapError(f"Infeasible swap {mv}: {reason}")
    (a, b), (c, d) = mv.removed
    dp, dq = _degrees(g, p), _degrees(g, q)
    return int(dp[a] - dp[c]) * int(dq[d] - dq[b])


@dataclass(frozen=True)
class Partition:
    blocks: np.ndarray
    n_blocks: int

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=np.int64)
        object.__setattr__(self, "blocks", blocks)
        if self.n_blocks < 1:
            raise PartitionError("A partition needs at least one block")
        if len(blocks) and (blocks.min() < 0 or blocks.max() >= self.n_blocks):
            raise PartitionError(f"Block labels must lie in 0..{self.n_blocks - 1}")
        sizes = np.bincount(blocks, minlength=self.n_blocks)
        empty = np.flatnonzero(sizes == 0)
        if len(empty):
            raise PartitionError(f"Empty partition block(s): {empty.tolist()}")

    @classmethod
    def from_blocks(cls, blocks: Sequence[int], n_blocks: Optional[int] = None) -> "Partition":
        blocks = np.asarray(blocks, dtype=np.int64)
        return cls(blocks, int(blocks.max()) + 1 if n_blocks is None else n_blocks)

    @property
    def n(self) -> int:
        return len(self.blocks)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.blocks == k)

    def check_graph(self, g: DirectedGraph):
        if self.n != g.n:
            raise PartitionError(f"Partition covers {self.n} vertices but the graph has {g.n}")


@dataclass(frozen=True)
class CoreSplit:
    """Core H and periphery L as boolean masks; scope = H | L need not be all vertices."""
    core: np.ndarray
    periphery: np.ndarray

    def __post_init__(self):
        core = np.asarray(self.core, dtype=bool)
        periphery = np.asarray(self.periphery, dtype=bool)
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "periphery", periphery)
        if core.shape != periphery.shape:
            raise PartitionError("Core and periphery masks differ in length")
        if (core & periphery).any():
            raise PartitionError("Core and periphery overlap")
        if not core.any() or not periphery.any():
            raise PartitionError("Core and periphery must both be nonempty")

    @property
    def scope(self) -> np.ndarray:
        return self.core | self.periphery

    @classmethod
    def from_partition(cls, partition: Partition) -> "CoreSplit":
        if partition.n_blocks != 2:
            raise PartitionError("A core-periphery partition has exactly two blocks (0 = H, 1 = L)")
        return cls(partition.blocks == 0, partition.blocks == 1)

    @classmethod
    def by_degree(cls, degrees: np.ndarray, core_fraction: float = 0.2,
                  scope: Optional[np.ndarray] = None) -> "CoreSplit":
        n = len(degrees)
        members = np.arange(n) if scope is None else np.flatnonzero(scope)
        if len(members) < 2:
            raise PartitionError("Need at least two vertices to split into core and periphery")
        # stable sort: ties go to the lower index
        ranked = members[np.argsort(-np.asarray(degrees)[members], kind="stable")]
        n_core = min(max(1, int(round(core_fraction * len(members)))), len(members) - 1)
        core = np.zeros(n, dtype=bool)
        core[ranked[:n_core]] = True
        periphery = np.zeros(n, dtype=bool)
        periphery[ranked[n_core:]] = True
        return cls(core, periphery)

    def to_partition(self) -> Partition:
        if not self.scope.all():
            raise PartitionError("Only a split covering every vertex converts to a partition")
        return Partition(np.where(self.core, 0, 1), 2)


def block_counts(g: DirectedGraph, partition: Partition) -> np.ndarray:
    counts = np.zeros((partition.n_blocks, partition.n_blocks), dtype=np.int64)
    tails, heads = g.edge_arrays()
    np.add.at(counts, (partition.blocks[tails], partition.blocks[heads]), 1)
    return counts


def community_contrast(g: DirectedGraph, partition: Partition) -> float:
    partition.check_graph(g)
    m = g.m
    if m == 0:
        raise DegenerateStatisticError("Community contrast needs at least one edge")
    e = block_counts(g, partition)
    numerator = int(np.trace(e)) * m - int(e.sum(axis=1) @ e.sum(axis=0))
    return float(Fraction(numerator, m * m))


def core_periphery_contrast(g: DirectedGraph, split: CoreSplit) -> float:
    """1 - 2 e_LL over the edges with both endpoints in the split's scope."""
    tails, heads = g.edge_arrays()
    internal = split.scope[tails] & split.scope[heads]
    m_scope = int(internal.sum())
    if m_scope == 0:
        raise DegenerateStatisticError("Core-periphery contrast needs at least one edge inside the scope")
    ll = int((split.periphery[tails] & split.periphery[heads]).sum())
    return float(Fraction(m_scope - 2 * ll, m_scope))


def _check_cycle_request(g: DirectedGraph, k: int, cap: int, n_cap: int):
    if k < 3:
        raise CycleCapError(f"Cycle length must be at least 3, got {k}")
    if k > cap:
        raise CycleCapError(f"Cycle length {k} exceeds the cap {cap}")
    if g.n > n_cap:
        raise CycleCapError(f"Cycle counting is capped at n = {n_cap}, got {g.n}")


def k_cycle_count(g: DirectedGraph, k: int, cap: int = 6, n_cap: int = 2000) -> int:
    """Simple directed k-cycles, each counted once from its minimum-index vertex."""
    _check_cycle_request(g, k, cap, n_cap)
    count = 0
    for s in range(g.n):
        visited = {s}

        def extend(v, depth):
            nonlocal count
            if depth == k:
                if s in g.successors(v):
                    count += 1
                return
            for w in g.successors(v):
                if w > s and w not in visited:
                    visited.add(w)
                    extend(w, depth + 1)
                    visited.discard(w)

        extend(s, 1)
    return count


def cycles_through_edge(g: DirectedGraph, u: int, v: int, k: int) -> int:
    """Number of k-cycles that use u -> v, i.e. simple paths v -> ... -> u on k vertices.

    The edge itself need not be present.
    """
    if u == v:
        return 0
    count = 0
    visited = {u, v}

    def extend(x, depth):
        nonlocal count
        if depth == k - 1:
            if u in g.successors(x):
                count += 1
            return
        for w in g.successors(x):
            if w not in visited:
                visited.add(w)
                extend(w, depth + 1)
                visited.discard(w)

    extend(v, 1)
    return count


def k_cycle_delta(g: DirectedGraph, moves: Sequence[SwapMove], k: int) -> int:
    """Exact change of the k-cycle count under `moves`, applied in order.

    The graph is mutated edge by edge and restored before returning.
    """
    undo = []
    d = 0
    try:
        for mv in moves:
            reason = g.swap_violation(mv)
            if reason is not None:
                raise InfeasibleSwapError(f"Infeasible swap {mv}: {reason}")
            for u, v in mv.removed:
                d -= cycles_through_edge(g, u, v, k)
                g.remove_edge(u, v)
                undo.append((g.add_edge, u, v))
            for u, v in mv.added:
                d += cycles_through_edge(g, u, v, k)
                g.add_edge(u, v)
                undo.append((g.remove_edge, u, v))
    finally:
        for op, u, v in reversed(undo):
            op(u, v)
    return d


def falling_factorial(n: int, k: int) -> int:
    return math.prod(range(n - k + 1, n + 1))


def k_cycle_density(g: DirectedGraph, k: int, cap: int = 6) -> float:
    if g.n < k:
        raise ValueError(f"Cycle density needs n >= k, got n = {g.n}, k = {k}")
    return float(Fraction(k_cycle_count(g, k, cap) * k, falling_factorial(g.n, k)))


def triangle_count_trace(g: DirectedGraph) -> int:
    A = g.to_sparse(np.int64)
    closed_walks = int((A @ A).multiply(A.T).sum())
    return closed_walks // 3


@dataclass(frozen=True)
class CycleStat:
    k: int
    count: int
    density: float

    @classmethod
    def of(cls, g: DirectedGraph, k: int, cap: int = 6) -> "CycleStat":
        count = k_cycle_count(g, k, cap)
        return cls(k, count, float(Fraction(count * k, falling_factorial(g.n, k))))


class StatisticTracker(ABC):
    """Incremental driven statistic for one trajectory (single writer).

    `delta` returns the exact change of an integer potential whose sign is the
    sign of the statistic's change; `apply` commits a move already applied to
    the graph.
    """

    name = "statistic"

    @property
    @abstractmethod
    def value(self) -> float:
        ...

    @abstractmethod
    def delta(self, g: DirectedGraph, moves: List[SwapMove]) -> int:
        ...

    @abstractmethod
    def apply(self, g: DirectedGraph, moves: List[SwapMove], delta: int):
        ...

    def has_candidates(self, g: DirectedGraph) -> bool:
        return g.m >= 2


class AssortativityTracker(StatisticTracker):
    name = "assortativity"

    def __init__(self, g: DirectedGraph, p: str = "out", q: str = "in", sign: int = 1):
        if sign not in (1, -1):
            raise ValueError("Assortativity sign must be +1 or -1")
        self.ctx = AssortativityContext.from_graph(g, p, q)
        self.ctx.nu  # fail early on degenerate degree samples
        self.sign = sign

    @property
    def value(self) -> float:
        return self.sign * self.ctx.phi

    def delta(self, g, moves):
        return self.sign * sum(self.ctx.delta_S(mv) for mv in moves)

    def apply(self, g, moves, delta):
        self.ctx.S += self.sign * delta


class CommunityTracker(StatisticTracker):
    """Block-pair edge counters plus pools of cross-block edges by ordered pair."""

    name = "community"

    def __init__(self, g: DirectedGraph, partition: Partition):
        partition.check_graph(g)
        if g.m == 0:
            raise DegenerateStatisticError("Community contrast needs at least one edge")
        self.partition = partition
        self.counts = block_counts(g, partition)
        self.m = g.m
        self.within = int(np.trace(self.counts))
        # block marginals depend only on degrees
        self.marginal = int(self.counts.sum(axis=1) @ self.counts.sum(axis=0))
        self.cross: Dict[Tuple[int, int], EdgePool] = {}
        for e in g.edges:
            key = self._key(e)
            if key[0] != key[1]:
                self.cross.setdefault(key, EdgePool()).add(e)

    def _key(self, e: Edge) -> Tuple[int, int]:
        return int(self.partition.blocks[e[0]]), int(self.partition.blocks[e[1]])

    @property
    def value(self) -> float:
        return float(Fraction(self.within * self.m - self.marginal, self.m * self.m))

    def delta(self, g, moves):
        d = 0
        for mv in moves:
            d += sum(1 for e in mv.added if self._key(e)[0] == self._key(e)[1])
            d -= sum(1 for e in mv.removed if self._key(e)[0] == self._key(e)[1])
        return d

    def apply(self, g, moves, delta):
        for mv in moves:
            for e in mv.removed:
                key = self._key(e)
                self.counts[key] -= 1
                if key[0] != key[1]:
                    self.cross[key].discard(e)
            for e in mv.added:
                key = self._key(e)
                self.counts[key] += 1
                if key[0] != key[1]:
                    self.cross.setdefault(key, EdgePool()).add(e)
        self.within += delta

    def cross_edge_count(self) -> int:
        return self.m - self.within

    def eligible_pairs(self) -> List[Tuple[int, int]]:
        K = self.partition.n_blocks
        return [(p, q) for p in range(K) for q in range(p + 1, K)
                if len(self.cross.get((p, q), ())) and len(self.cross.get((q, p), ()))]

    def has_candidates(self, g):
        return bool(self.eligible_pairs())


class CorePeripheryTracker(StatisticTracker):
    """Pools of scope-internal edges by class: LL, HH and HL."""

    name = "core_periphery"

    def __init__(self, g: DirectedGraph, split: CoreSplit, allow_peripheral_head: bool = False):
        self.split = split
        self.allow_peripheral_head = allow_peripheral_head
        self.pools: Dict[str, EdgePool] = {"LL": EdgePool(), "HH": EdgePool(), "HL": EdgePool()}
        self.m_scope = 0
        for e in g.edges:
            cls = self._class(e)
            if cls is not None:
                self.m_scope += 1
                if cls in self.pools:
                    self.pools[cls].add(e)
        if self.m_scope == 0:
            raise DegenerateStatisticError("Core-periphery contrast needs at least one edge inside the scope")

    def _class(self, e: Edge) -> Optional[str]:
        u, v = e
        if not (self.split.scope[u] and self.split.scope[v]):
            return None
        return ("H" if self.split.core[u] else "L") + ("H" if self.split.core[v] else "L")

    @property
    def ll_count(self) -> int:
        return len(self.pools["LL"])

    @property
    def value(self) -> float:
        return float(Fraction(self.m_scope - 2 * self.ll_count, self.m_scope))

    def delta(self, g, moves):
        d = 0
        for mv in moves:
            d += sum(1 for e in mv.removed if self._class(e) == "LL")
            d -= sum(1 for e in mv.added if self._class(e) == "LL")
        return d

    def apply(self, g, moves, delta):
        for mv in moves:
            for e in mv.removed:
                cls = self._class(e)
                if cls in self.pools:
                    self.pools[cls].discard(e)
            for e in mv.added:
                cls = self._class(e)
                if cls in self.pools:
                    self.pools[cls].add(e)

    def head_pool_size(self) -> int:
        size = len(self.pools["HH"])
        if self.allow_peripheral_head:
            size += len(self.pools["HL"])
        return size

    def has_candidates(self, g):
        return self.ll_count > 0 and self.head_pool_size() > 0


class CycleTracker(StatisticTracker):
    name = "k_cycle"

    def __init__(self, g: DirectedGraph, k: int, cap: int = 6):
        if g.n < k:
            raise ValueError(f"Cycle density needs n >= k, got n = {g.n}, k = {k}")
        self.k = k
        self.count = k_cycle_count(g, k, cap)
        self.denominator = falling_factorial(g.n, k)

    @property
    def value(self) -> float:
        return float(Fraction(self.count * self.k, self.denominator))

    def delta(self, g, moves):
        return k_cycle_delta(g, moves, self.k)

    def apply(self, g, moves, delta):
        self.count += delta
