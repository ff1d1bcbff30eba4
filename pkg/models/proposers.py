import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.graph import DirectedGraph, GraphError, SwapMove, random_swap
from models.netstats import (AssortativityContext, AssortativityTracker, CommunityTracker,
                             CorePeripheryTracker, CycleTracker, k_cycle_delta)

logger = logging.getLogger(__name__)


class GrowCycleError(GraphError):
    pass


@dataclass
class Proposal:
    """One or more swaps evaluated and accepted as a unit."""
    moves: List[SwapMove]
    delta: Optional[int] = None
    context: Optional[list] = field(default=None, repr=False)


def _pick(items: Sequence, rng: np.random.Generator):
    return items[int(rng.integers(len(items)))]


def propose_assortativity_swap(g: DirectedGraph, ctx: AssortativityContext, sign: int,
                               rng: np.random.Generator, strict: bool = True,
                               max_tries: int = 50) -> Optional[SwapMove]:
    for _ in range(max_tries):
        mv = random_swap(g, rng)
        if mv is None:
            continue
        d = sign * ctx.delta_S(mv)
        if d > 0 or (d == 0 and not strict):
            return mv
    return None


def propose_community_swap(g: DirectedGraph, tracker: CommunityTracker, rng: np.random.Generator,
                           max_tries: int = 50) -> Optional[SwapMove]:
    """Turn a cross pair (a,b) in E_pq, (c,d) in E_qp into within-block (a,d), (c,b)."""
    pairs = tracker.eligible_pairs()
    if not pairs:
        return None
    p, q = pairs[0] if len(pairs) == 1 else _pick(pairs, rng)
    forward, backward = tracker.cross[(p, q)], tracker.cross[(q, p)]
    for _ in range(max_tries):
        mv = SwapMove.from_edges(forward.choice(rng), backward.choice(rng))
        if g.swap_violation(mv) is None:
            return mv
    return None


def propose_core_periphery_swap(g: DirectedGraph, tracker: CorePeripheryTracker, rng: np.random.Generator,
                                max_tries: int = 50) -> Optional[SwapMove]:
    """Remove a periphery edge (a,b) and a core-tailed edge (c,d); add (a,d), (c,b).

    The head d is in H unless the tracker allows peripheral heads.
    """
    ll, hh, hl = tracker.pools["LL"], tracker.pools["HH"], tracker.pools["HL"]
    n_heads = tracker.head_pool_size()
    if not len(ll) or not n_heads:
        return None
    for _ in range(max_tries):
        i = int(rng.integers(n_heads))
        donor = hh[i] if i < len(hh) else hl[i - len(hh)]
        mv = SwapMove.from_edges(ll.choice(rng), donor)
        if g.swap_violation(mv) is None:
            return mv
    return None


def _random_open_path(g: DirectedGraph, k: int, rng: np.random.Generator) -> Optional[List[int]]:
    # random simple path on k vertices grown from a uniform edge
    path = list(g.edges.choice(rng))
    on_path = set(path)
    while len(path) < k:
        options = sorted(g.successors(path[-1]) - on_path)
        if not options:
            return None
        w = _pick(options, rng)
        path.append(w)
        on_path.add(w)
    return path


def propose_k_cycle_swap(g: DirectedGraph, k: int, rng: np.random.Generator,
                         max_tries: int = 50) -> Optional[Tuple[SwapMove, int]]:
    """Close an almost k-cycle i_1 -> ... -> i_k by adding i_k -> i_1.

    Deletes an out-edge i_k -> d and an in-edge e -> i_1 with d, e off the
    path and reconnects e -> d. Returns the move with its exact k-cycle count
    change, which is positive.
    """
    if k < 3:
        raise ValueError(f"Cycle length must be at least 3, got {k}")
    if g.m < 2:
        return None
    for _ in range(max_tries):
        path = _random_open_path(g, k, rng)
        if path is None:
            continue
        first, last = path[0], path[-1]
        if g.has_edge(last, first):
            continue
        on_path = set(path)
        heads = sorted(g.successors(last) - on_path)
        tails = sorted(g.predecessors(first) - on_path)
        if not heads or not tails:
            continue
        d, e = _pick(heads, rng), _pick(tails, rng)
        mv = SwapMove.from_edges((last, d), (e, first))
        if g.swap_violation(mv) is not None:
            continue
        delta = k_cycle_delta(g, [mv], k)
        if delta > 0:
            return mv, delta
    return None


def propose_triangle_swap(g: DirectedGraph, rng: np.random.Generator,
                          max_tries: int = 50) -> Optional[Tuple[SwapMove, int]]:
    """Close a -> b -> c -> a via (c,d), (e,a) => (c,a), (e,d) with d, e outside {a, b, c}."""
    return propose_k_cycle_swap(g, 3, rng, max_tries)


def is_cycle(g: DirectedGraph, cycle: Sequence[int]) -> bool:
    if len(set(cycle)) != len(cycle) or len(cycle) < 2:
        return False
    return all(g.has_edge(u, cycle[(i + 1) % len(cycle)]) for i, u in enumerate(cycle))


def plan_cycle_growth(g: DirectedGraph, cycle: Sequence[int], rng: np.random.Generator,
                      max_tries: int = 50) -> Tuple[List[SwapMove], List[int]]:
    """Reroute a cycle edge u -> v through a fresh vertex w.

    First (u,v),(x,w) => (u,w),(x,v), then (x,v),(w,y) => (x,y),(w,v); the
    net effect is u -> w -> v plus x -> y, the cycle grows by one.
    """
    if not is_cycle(g, cycle):
        raise GrowCycleError(f"{list(cycle)} is not a directed cycle of the graph")
    on_cycle = set(cycle)
    fresh = [w for w in range(g.n) if w not in on_cycle and g.in_deg[w] and g.out_deg[w]]
    if not fresh:
        raise GrowCycleError("No fresh vertex with both in- and out-edges is available")

    for _ in range(max_tries):
        i = int(rng.integers(len(cycle)))
        u, v = cycle[i], cycle[(i + 1) % len(cycle)]
        w = _pick(fresh, rng)
        x = _pick(sorted(g.predecessors(w)), rng)
        y = _pick(sorted(g.successors(w)), rng)
        first = SwapMove.from_edges((u, v), (x, w))
        second = SwapMove.from_edges((x, v), (w, y))
        if g.swap_violation(first) is not None:
            continue
        g.apply_swap(first)
        try:
            feasible = g.swap_violation(second) is None
        finally:
            g.apply_swap(first.inverse())
        if feasible:
            return [first, second], list(cycle[:i + 1]) + [w] + list(cycle[i + 1:])
    raise GrowCycleError(f"No admissible donor edges found in {max_tries} tries")


def grow_cycle(g: DirectedGraph, cycle: Sequence[int], rng: np.random.Generator,
               max_tries: int = 50) -> List[SwapMove]:
    moves, _ = plan_cycle_growth(g, cycle, rng, max_tries)
    return moves


def find_triangle(g: DirectedGraph, rng: np.random.Generator, max_tries: int = 50) -> Optional[List[int]]:
    for _ in range(max_tries):
        a, b = g.edges.choice(rng)
        closing = sorted(c for c in g.successors(b) if c != a and g.has_edge(c, a))
        if closing:
            return [a, b, _pick(closing, rng)]
    return None


class Proposer(ABC):
    def __init__(self, tracker, max_tries: int = 50):
        self.tracker = tracker
        self.max_tries = max_tries

    @abstractmethod
    def propose(self, g: DirectedGraph, rng: np.random.Generator) -> Optional[Proposal]:
        ...

    def on_accept(self, proposal: Proposal):
        pass

    def on_rollback(self):
        """Accepted proposals since the last verified state were undone."""
        pass

    def has_candidates(self, g: DirectedGraph) -> bool:
        return self.tracker.has_candidates(g)


class AssortativityProposer(Proposer):
    tracker: AssortativityTracker

    def __init__(self, tracker: AssortativityTracker, strict: bool = True, max_tries: int = 50):
        super().__init__(tracker, max_tries)
        self.strict = strict

    def propose(self, g, rng):
        mv = propose_assortativity_swap(g, self.tracker.ctx, self.tracker.sign, rng, self.strict, self.max_tries)
        if mv is None:
            return None
        return Proposal([mv], self.tracker.delta(g, [mv]))


class CommunityProposer(Proposer):
    def propose(self, g, rng):
        mv = propose_community_swap(g, self.tracker, rng, self.max_tries)
        return None if mv is None else Proposal([mv], self.tracker.delta(g, [mv]))


class CorePeripheryProposer(Proposer):
    def propose(self, g, rng):
        mv = propose_core_periphery_swap(g, self.tracker, rng, self.max_tries)
        return None if mv is None else Proposal([mv], self.tracker.delta(g, [mv]))


class CycleProposer(Proposer):
    tracker: CycleTracker

    def propose(self, g, rng):
        found = propose_k_cycle_swap(g, self.tracker.k, rng, self.max_tries)
        if found is None:
            return None
        mv, delta = found
        return Proposal([mv], delta)


class CycleGrowProposer(Proposer):
    """Keeps a working cycle and grows it one vertex at a time up to length k.

    Without a working cycle it adopts an existing triangle, or closes one
    with a triangle swap.
    """

    tracker: CycleTracker

    def __init__(self, tracker: CycleTracker, max_tries: int = 50):
        super().__init__(tracker, max_tries)
        self.cycle: Optional[List[int]] = None

    def propose(self, g, rng):
        if self.cycle is not None and (len(self.cycle) >= self.tracker.k or not is_cycle(g, self.cycle)):
            self.cycle = None
        if self.cycle is None:
            self.cycle = find_triangle(g, rng, self.max_tries)
        if self.cycle is None:
            found = propose_k_cycle_swap(g, 3, rng, self.max_tries)
            if found is None:
                return None
            mv, _ = found
            (last, _d), (_e, first) = mv.removed
            middle = self._middle(g, first, last)
            context = None if middle is None else [first, middle, last]
            return Proposal([mv], None, context)

        try:
            moves, grown = plan_cycle_growth(g, self.cycle, rng, self.max_tries)
        except GrowCycleError as e:
            logger.debug("Dropping working cycle %s: %s", self.cycle, e)
            self.cycle = None
            return None
        return Proposal(moves, None, grown)

    @staticmethod
    def _middle(g, first, last) -> Optional[int]:
        shared = sorted(g.successors(first) & g.predecessors(last))
        return shared[0] if shared else None

    def on_accept(self, proposal):
        if proposal.context is not None:
            self.cycle = proposal.context

    def on_rollback(self):
        self.cycle = None
