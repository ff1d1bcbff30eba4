import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from tqdm.auto import tqdm

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


class GraphError(ValueError):
    pass


class EdgeListParseError(GraphError):
    pass


class InfeasibleSwapError(GraphError):
    pass


class DegreeSequenceError(GraphError):
    pass


class NotStronglyConnectedError(GraphError):
    pass


@dataclass(frozen=True)
class SwapMove:
    """Replace (a,b),(c,d) by (a,d),(c,b)."""
    removed: Tuple[Edge, Edge]
    added: Tuple[Edge, Edge]

    @classmethod
    def from_edges(cls, first: Edge, second: Edge) -> "SwapMove":
        (a, b), (c, d) = first, second
        return cls(removed=((a, b), (c, d)), added=((a, d), (c, b)))

    @property
    def vertices(self) -> Tuple[int, ...]:
        (a, b), (c, d) = self.removed
        return tuple(sorted({a, b, c, d}))

    def inverse(self) -> "SwapMove":
        return SwapMove.from_edges(*self.added)

    def to_dense(self, n: int) -> np.ndarray:
        delta = np.zeros((n, n), dtype=np.int64)
        for u, v in self.removed:
            delta[u, v] -= 1
        for u, v in self.added:
            delta[u, v] += 1
        return delta


class EdgePool:
    """Indexed set of edges with O(1) add, remove and uniform choice."""

    def __init__(self, edges: Iterable[Edge] = ()):
        self._items: List[Edge] = []
        self._pos: Dict[Edge, int] = {}
        for e in edges:
            self.add(e)

    def add(self, e: Edge):
        if e in self._pos:
            return
        self._pos[e] = len(self._items)
        self._items.append(e)

    def discard(self, e: Edge):
        idx = self._pos.pop(e, None)
        if idx is None:
            return
        last = self._items.pop()
        if idx < len(self._items):
            self._items[idx] = last
            self._pos[last] = idx

    def choice(self, rng: np.random.Generator) -> Edge:
        return self._items[int(rng.integers(len(self._items)))]

    def __getitem__(self, idx: int) -> Edge:
        return self._items[idx]

    def __contains__(self, e) -> bool:
        return e in self._pos

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Edge]:
        return iter(self._items)


@dataclass(frozen=True)
class DegreeVectors:
    d_out: np.ndarray
    d_in: np.ndarray
    d_out_unit: np.ndarray
    d_in_unit: np.ndarray

    @classmethod
    def from_sequences(cls, d_out: Sequence[int], d_in: Sequence[int]) -> "DegreeVectors":
        d_out = np.asarray(d_out, dtype=np.int64)
        d_in = np.asarray(d_in, dtype=np.int64)
        if (d_out < 0).any() or (d_in < 0).any():
            raise DegreeSequenceError("Degrees must be nonnegative")
        norm_out = np.linalg.norm(d_out.astype(np.float64))
        norm_in = np.linalg.norm(d_in.astype(np.float64))
        if norm_out == 0 or norm_in == 0:
            raise DegreeSequenceError("Degree vector is identically zero")
        return cls(d_out=d_out, d_in=d_in, d_out_unit=d_out / norm_out, d_in_unit=d_in / norm_in)


class DirectedGraph:
    """Simple digraph on vertices 0..n-1 with a mutable edge set.

    Degrees are kept in sync with the edge set; edges live in an EdgePool so
    that uniform edge sampling is O(1).
    """

    def __init__(self, n: int, edges: Iterable[Edge] = ()):
        if n < 1:
            raise GraphError(f"Vertex count must be positive, got {n}")
        self.n = n
        self._pool = EdgePool()
        self.out_deg = np.zeros(n, dtype=np.int64)
        self.in_deg = np.zeros(n, dtype=np.int64)
        self._succ: List[set] = [set() for _ in range(n)]
        self._pred: List[set] = [set() for _ in range(n)]
        for u, v in edges:
            self.add_edge(u, v)

    @property
    def m(self) -> int:
        return len(self._pool)

    @property
    def edges(self) -> EdgePool:
        return self._pool

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._pool

    def successors(self, u: int) -> set:
        return self._succ[u]

    def predecessors(self, v: int) -> set:
        return self._pred[v]

    def add_edge(self, u: int, v: int):
        if not (0 <= u < self.n and 0 <= v < self.n):
            raise GraphError(f"Edge ({u}, {v}) has a vertex outside 0..{self.n - 1}")
        if u == v:
            raise GraphError(f"Self-loop at vertex {u}")
        if (u, v) in self._pool:
            raise GraphError(f"Duplicate edge ({u}, {v})")
        self._pool.add((u, v))
        self._succ[u].add(v)
        self._pred[v].add(u)
        self.out_deg[u] += 1
        self.in_deg[v] += 1

    def remove_edge(self, u: int, v: int):
        if (u, v) not in self._pool:
            raise GraphError(f"Edge ({u}, {v}) is not present")
        self._pool.discard((u, v))
        self._succ[u].discard(v)
        self._pred[v].discard(u)
        self.out_deg[u] -= 1
        self.in_deg[v] -= 1

    def swap_violation(self, mv: SwapMove) -> Optional[str]:
        (a, b), (c, d) = mv.removed
        if mv.added != ((a, d), (c, b)):
            return "added edges do not cross-reconnect the removed ones"
        if (a, b) == (c, d):
            return "removed edges coincide"
        for e in mv.removed:
            if e not in self._pool:
                return f"removed edge {e} is absent"
        for u, v in mv.added:
            if u == v:
                return f"added edge {(u, v)} is a self-loop"
            if (u, v) in self._pool:
                return f"added edge {(u, v)} is already present"
        return None

    def apply_swap(self, mv: SwapMove) -> "DirectedGraph":
        reason = self.swap_violation(mv)
        if reason is not None:
            raise InfeasibleSwapError(f"Infeasible swap {mv}: {reason}")
        for u, v in mv.removed:
            self.remove_edge(u, v)
        for u, v in mv.added:
            self.add_edge(u, v)
        return self

    def copy(self) -> "DirectedGraph":
        return DirectedGraph(self.n, self.edge_list())

    def edge_list(self) -> List[Edge]:
        return sorted(self._pool)

    def edge_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.m == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        arr = np.asarray(self.edge_list(), dtype=np.int64)
        return arr[:, 0], arr[:, 1]

    def adjacency(self, dtype=np.float64) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=dtype)
        tails, heads = self.edge_arrays()
        A[tails, heads] = 1
        return A

    def to_sparse(self, dtype=np.int64) -> csr_matrix:
        tails, heads = self.edge_arrays()
        return csr_matrix((np.ones(len(tails), dtype=dtype), (tails, heads)), shape=(self.n, self.n))

    def degree_vectors(self) -> DegreeVectors:
        return DegreeVectors.from_sequences(self.out_deg.copy(), self.in_deg.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return self.n == other.n and set(self._pool) == set(other._pool)

    def __repr__(self) -> str:
        return f"DirectedGraph(n={self.n}, m={self.m})"


def from_edge_list(text: str) -> DirectedGraph:
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 2 or parts[0] != "n":
                raise EdgeListParseError(f"line {lineno}: expected 'n <N>', got {raw!r}")
            try:
                n = int(parts[1])
            except ValueError:
                raise EdgeListParseError(f"line {lineno}: vertex count {parts[1]!r} is not an integer")
            continue
        if len(parts) != 2:
            raise EdgeListParseError(f"line {lineno}: expected '<u> <v>', got {raw!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(f"line {lineno}: non-integer vertex in {raw!r}")
        edges.append((u, v))
    if n is None:
        raise EdgeListParseError("missing 'n <N>' header")

    g = DirectedGraph(n)
    for u, v in edges:
        try:
            g.add_edge(u, v)
        except GraphError as e:
            raise EdgeListParseError(str(e)) from e
    return g


def to_edge_list(g: DirectedGraph, comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(f"n {g.n}")
    lines.extend(f"{u} {v}" for u, v in g.edge_list())
    return "\n".join(lines) + "\n"


def apply_swap(g: DirectedGraph, mv: SwapMove) -> DirectedGraph:
    return g.apply_swap(mv)


def is_strongly_connected(g: DirectedGraph) -> bool:
    if g.n == 1:
        return True
    if g.m < g.n:
        return False
    n_components, _ = connected_components(g.to_sparse(), directed=True, connection="strong")
    return n_components == 1


@dataclass(frozen=True)
class SccGuard:
    """When to re-check strong connectivity: every_swap, every_k or initial_only."""
    mode: str = "every_swap"
    k: int = 1

    @classmethod
    def parse(cls, spec: str, n: int) -> "SccGuard":
        if spec == "auto":
            return cls("every_swap") if n <= 1000 else cls("every_k", 10)
        if spec in ("every_swap", "initial_only"):
            return cls(spec)
        if spec.startswith("every_k"):
            try:
                k = int(spec.split(":", 1)[1])
            except (IndexError, ValueError):
                raise ValueError(f"SCC guard {spec!r} must look like 'every_k:<k>'")
            if k < 1:
                raise ValueError("SCC guard interval must be positive")
            return cls("every_k", k)
        raise ValueError(f"Unknown SCC guard {spec!r}; use every_swap, every_k:<k>, initial_only or auto")

    def should_check(self, accepted: int) -> bool:
        if self.mode == "every_swap":
            return True
        if self.mode == "every_k":
            return (accepted + 1) % self.k == 0
        return False


def sample_configuration_model(d_out: Sequence[int], d_in: Sequence[int], rng: np.random.Generator,
                               max_restarts: int = 100) -> DirectedGraph:
    d_out = np.asarray(d_out, dtype=np.int64)
    d_in = np.asarray(d_in, dtype=np.int64)
    n = len(d_out)
    if len(d_in) != n:
        raise DegreeSequenceError("Out- and in-degree sequences differ in length")
    if (d_out < 0).any() or (d_in < 0).any():
        raise DegreeSequenceError("Degrees must be nonnegative")
    if d_out.sum() != d_in.sum():
        raise DegreeSequenceError(f"Sum of out-degrees {d_out.sum()} != sum of in-degrees {d_in.sum()}")
    if n > 0 and (d_out.max() > n - 1 or d_in.max() > n - 1):
        raise DegreeSequenceError("A degree exceeds n - 1")

    m = int(d_out.sum())
    tails = np.repeat(np.arange(n), d_out)
    in_stubs = np.repeat(np.arange(n), d_in)

    for restart in range(max_restarts):
        heads = rng.permutation(in_stubs)
        counts: Dict[Edge, int] = {}
        for u, v in zip(tails.tolist(), heads.tolist()):
            counts[(u, v)] = counts.get((u, v), 0) + 1

        def bad(i):
            u, v = int(tails[i]), int(heads[i])
            return u == v or counts[(u, v)] > 1

        pending = [i for i in range(m) if bad(i)]
        attempts = 0
        while pending and attempts < 50 * m:
            i = pending.pop()
            if not bad(i):
                continue
            attempts += 1
            j = int(rng.integers(m))
            ui, vi, uj, vj = int(tails[i]), int(heads[i]), int(tails[j]), int(heads[j])
            counts[(ui, vi)] -= 1
            counts[(uj, vj)] -= 1
            new_i, new_j = (ui, vj), (uj, vi)
            if (i != j and ui != vj and uj != vi and new_i != new_j
                    and counts.get(new_i, 0) == 0 and counts.get(new_j, 0) == 0):
                heads[i], heads[j] = vj, vi
                counts[new_i] = 1
                counts[new_j] = 1
            else:
                counts[(ui, vi)] += 1
                counts[(uj, vj)] += 1
                pending.append(i)

        if not pending:
            g = DirectedGraph(n, zip(tails.tolist(), heads.tolist()))
            if restart:
                logger.debug("Configuration model succeeded after %d restarts", restart)
            return g
        logger.debug("Configuration model restart %d: %d colliding stubs left", restart + 1, len(pending))

    raise DegreeSequenceError(f"Stub matching failed after {max_restarts} restarts; sequence is near-infeasible")


def random_swap(g: DirectedGraph, rng: np.random.Generator) -> Optional[SwapMove]:
    if g.m < 2:
        return None
    i, j = rng.choice(g.m, size=2, replace=False)
    mv = SwapMove.from_edges(g.edges[int(i)], g.edges[int(j)])
    return mv if g.swap_violation(mv) is None else None


def neutral_randomize(g: DirectedGraph, steps: int, rng: np.random.Generator,
                      scc_guard: str = "auto", progress: bool = False,
                      stats: Optional[dict] = None) -> DirectedGraph:
    """Uniform feasible swaps without a driving statistic; `stats` receives the acceptance counts."""
    if not is_strongly_connected(g):
        raise NotStronglyConnectedError("neutral_randomize needs a strongly connected input")
    guard = SccGuard.parse(scc_guard, g.n)
    g = g.copy()
    accepted = infeasible = disconnecting = 0
    # swaps applied since the last successful connectivity check
    unchecked: List[SwapMove] = []

    def roll_back():
        for mv in reversed(unchecked):
            g.apply_swap(mv.inverse())
        unchecked.clear()

    for _ in tqdm(range(steps), desc="Randomizing", leave=False, disable=not progress):
        mv = random_swap(g, rng)
        if mv is None:
            infeasible += 1
            continue
        g.apply_swap(mv)
        unchecked.append(mv)
        if guard.should_check(accepted):
            if not is_strongly_connected(g):
                disconnecting += len(unchecked)
                accepted -= len(unchecked) - 1
                roll_back()
                continue
            unchecked.clear()
        accepted += 1
    if unchecked and not is_strongly_connected(g):
        disconnecting += len(unchecked)
        accepted -= len(unchecked)
        roll_back()
    logger.info("Neutral randomization: %d accepted, %d infeasible, %d rejected by SCC guard",
                accepted, infeasible, disconnecting)
    if stats is not None:
        stats.update(accepted=accepted, infeasible=infeasible, rejected_scc=disconnecting)
    return g
