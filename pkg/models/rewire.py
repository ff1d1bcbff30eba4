import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm.auto import tqdm

from models.bounds import degree_angle_bound, participation_bound, stewart_sun_bound
from models.graph import (DirectedGraph, NotStronglyConnectedError, SccGuard, SwapMove,
                          is_strongly_connected)
from models.netstats import (AssortativityTracker, CommunityTracker, CorePeripheryTracker, CoreSplit,
                             CycleTracker, Partition, PartitionError, StatisticTracker)
from models.perturbation import PerturbationLedger
from models.proposers import (AssortativityProposer, CommunityProposer, CorePeripheryProposer,
                              CycleGrowProposer, CycleProposer, Proposal, Proposer)
from models.spectral import (SpectralConfig, SpectralError, SpectralSummary, angle,
                             leading_left_eigenvector, leading_right_eigenvector, spectral_norm_sparse,
                             summarize)

logger = logging.getLogger(__name__)

STATISTICS = ("assortativity", "community", "core_periphery", "k_cycle", "triangle", "cycle_grow")
ANGLE_FILTERS = ("off", "pathwise_nondecreasing", "mean_admissible")

MAX_ACCEPTED = "max_accepted"
PROPOSAL_BUDGET = "proposal_budget"
NO_CANDIDATES = "no_candidates"
COMPLETED = "completed"


@dataclass
class RewiringPolicy:
    statistic: str = "assortativity"
    p: str = "out"
    q: str = "in"
    sign: int = 1
    partition: Optional[Partition] = field(default=None, repr=False)
    core_fraction: float = 0.2
    core_mode: str = "out"
    k: int = 3
    r_budget: int = 3
    strict: Optional[bool] = None
    angle_filter: str = "off"
    angle_sample_size: int = 8
    max_accepted: int = 100
    max_proposals: Optional[int] = None
    scc_guard: str = "auto"
    cp_allow_peripheral_head: bool = False
    max_tries: int = 50
    cycle_cap: int = 6
    spectral: SpectralConfig = field(default_factory=SpectralConfig)

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise ValueError(f"Unknown statistic {self.statistic!r}; choose from {', '.join(STATISTICS)}")
        if self.angle_filter not in ANGLE_FILTERS:
            raise ValueError(f"Unknown angle filter {self.angle_filter!r}; choose from {', '.join(ANGLE_FILTERS)}")
        if self.p not in ("out", "in") or self.q not in ("out", "in") or self.core_mode not in ("out", "in"):
            raise ValueError("Degree modes must be 'out' or 'in'")
        if self.sign not in (1, -1):
            raise ValueError("Assortativity sign must be +1 or -1")
        if self.r_budget < 1:
            raise ValueError("r_budget must be at least 1")
        if self.max_accepted < 0:
            raise ValueError("max_accepted must be nonnegative")
        if self.max_proposals is None:
            self.max_proposals = max(1000, 50 * self.max_accepted)
        if self.max_proposals < self.max_accepted:
            raise ValueError("max_proposals must be at least max_accepted")
        if not 0 < self.core_fraction < 1:
            raise ValueError("core_fraction must lie in (0, 1)")
        if self.statistic == "triangle":
            self.k = 3
        if self.statistic in ("k_cycle", "cycle_grow", "triangle") and not 3 <= self.k <= self.cycle_cap:
            raise ValueError(f"Cycle length must lie in 3..{self.cycle_cap}, got {self.k}")
        if self.statistic == "community" and self.partition is None:
            raise PartitionError("Community rewiring needs a partition")
        if self.strict is None:
            self.strict = self.statistic == "assortativity"
        if self.angle_sample_size < 1 or self.max_tries < 1:
            raise ValueError("angle_sample_size and max_tries must be positive")

    def core_split(self, g: DirectedGraph) -> CoreSplit:
        if self.partition is not None:
            self.partition.check_graph(g)
            return CoreSplit.from_partition(self.partition)
        degrees = g.out_deg if self.core_mode == "out" else g.in_deg
        return CoreSplit.by_degree(degrees, self.core_fraction)

    def make_tracker(self, g: DirectedGraph) -> StatisticTracker:
        if self.statistic == "assortativity":
            return AssortativityTracker(g, self.p, self.q, self.sign)
        if self.statistic == "community":
            return CommunityTracker(g, self.partition)
        if self.statistic == "core_periphery":
            return CorePeripheryTracker(g, self.core_split(g), self.cp_allow_peripheral_head)
        return CycleTracker(g, self.k, self.cycle_cap)

    def make_proposer(self, tracker: StatisticTracker) -> Proposer:
        if self.statistic == "assortativity":
            return AssortativityProposer(tracker, self.strict, self.max_tries)
        if self.statistic == "community":
            return CommunityProposer(tracker, self.max_tries)
        if self.statistic == "core_periphery":
            return CorePeripheryProposer(tracker, self.max_tries)
        if self.statistic == "cycle_grow":
            return CycleGrowProposer(tracker, self.max_tries)
        return CycleProposer(tracker, self.max_tries)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("partition", "spectral")}
        out["spectral"] = asdict(self.spectral)
        out["partition_blocks"] = None if self.partition is None else self.partition.n_blocks
        return out


@dataclass
class TrajectoryRecord:
    t: int
    phi: float
    theta_deg_evec: float
    theta_in_left: float
    theta_evec_rot: float
    sin_rotation: float
    omega_norm: float
    omega_cap: float
    kappa_t: float
    gamma_t: float
    lambda1_t: float
    ss_condition: bool
    ss_bound: float
    degree_bound: float
    clamped: bool
    spectral_ok: bool
    proposals_tried: int
    rng_state_digest: str
    level: int = 0
    phi_level: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryRecord":
        # non-finite floats are stored as null
        kinds = {f.name: f.type for f in fields(cls)}
        return cls(**{k: (math.nan if v is None and kinds[k] in (float, "float") else v)
                      for k, v in d.items() if k in kinds})


@dataclass
class PhaseSummary:
    level: int
    scope_size: int
    accepted: int
    proposals: int
    stop_reason: str
    phi_start: float
    phi_end: float


@dataclass
class TrajectoryResult:
    graph: DirectedGraph
    ledger: PerturbationLedger
    records: List[TrajectoryRecord]
    baseline: SpectralSummary
    theta0: float
    theta0_in: float
    phi0: float
    stop_reason: str
    proposals: int
    seed: int
    phases: List[PhaseSummary] = field(default_factory=list)
    rejections: Dict[str, int] = field(default_factory=dict)

    @property
    def accepted(self) -> int:
        return self.ledger.accepted

    @property
    def theta_monotone(self) -> bool:
        thetas = [self.theta0] + [r.theta_deg_evec for r in self.records]
        diffs = np.diff(thetas)
        return bool((diffs >= 0).all() or (diffs <= 0).all())


def rng_state_digest(rng: np.random.Generator) -> str:
    state = json.dumps(rng.bit_generator.state, sort_keys=True,
                       default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o))
    return hashlib.sha256(state.encode()).hexdigest()[:16]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


class TrajectoryRunner:
    """Owns one trajectory: graph, ledger, RNG, baseline spectrum and records.

    A run is one or more phases; each phase drives its own statistic tracker
    under its own participation budget while the total ledger and the record
    clock are shared. The first phase's tracker is the primary statistic:
    it is kept current through every later phase and is what records report
    as phi.

    Under an every_k connectivity guard the swaps accepted since the last
    passing check are journaled; a failing check rolls graph, ledgers,
    trackers and records back to that verified state.
    """

    def __init__(self, g0: DirectedGraph, policy: RewiringPolicy, recorder_stride: int = 10,
                 seed: int = 0, progress: bool = False):
        if recorder_stride < 1:
            raise ValueError("recorder_stride must be positive")
        if not is_strongly_connected(g0):
            raise NotStronglyConnectedError("Rewiring needs a strongly connected baseline")
        self.policy = policy
        self.stride = recorder_stride
        self.seed = seed
        self.progress = progress
        self.g = g0.copy()
        self.rng = make_rng(seed)
        self.guard = SccGuard.parse(policy.scc_guard, g0.n)
        self.ledger = PerturbationLedger(g0.n)
        self.degrees = g0.degree_vectors()
        self.baseline = summarize(self.g, self.degrees, policy.spectral)
        self.theta0 = angle(self.degrees.d_out, self.baseline.v_right)
        self.theta0_in = angle(self.degrees.d_in, self.baseline.v_left)
        self.v_right = self.baseline.v_right
        self.v_left = self.baseline.v_left
        self.theta = self.theta0
        self.phi0 = math.nan
        self.proposer: Optional[Proposer] = None
        self.budget_r = self.total_r = policy.r_budget
        self.t = 0
        self.proposals = 0
        self.accepted_proposals = 0
        self.records: List[TrajectoryRecord] = []
        self.phases: List[PhaseSummary] = []
        self.rejections = {"empty": 0, "budget": 0, "contour": 0, "angle": 0, "scc": 0, "overflow": 0,
                           "rolled_back": 0}
        self.primary: Optional[StatisticTracker] = None
        self.journal: List[Tuple[List[SwapMove], int, int]] = []
        self.verified = self._snapshot()
        logger.info("Baseline: lambda1 = %.6g, gap = %.6g, kappa = %.6g, theta0 = %.3e rad",
                    self.baseline.lambda1, self.baseline.gap, self.baseline.kappa, self.theta0)

    def _theta_after(self, moves: Sequence[SwapMove]) -> float:
        for mv in moves:
            self.g.apply_swap(mv)
        try:
            pair = leading_right_eigenvector(self.g, self.policy.spectral.tol,
                                             self.policy.spectral.iterations_for(self.g.n),
                                             start=self.v_right, reference=self.degrees.d_out_unit,
                                             shift=self.policy.spectral.shift)
        finally:
            for mv in reversed(moves):
                self.g.apply_swap(mv.inverse())
        return angle(self.degrees.d_out, pair.vector)

    def _angle_admits(self, proposal: Proposal, tracker: StatisticTracker, budget: PerturbationLedger):
        """Returns (admitted, theta after the proposal)."""
        theta_new = self._theta_after(proposal.moves)
        if self.policy.angle_filter == "pathwise_nondecreasing":
            return theta_new >= self.theta, theta_new

        # mean over a sample of other upper-contour candidates
        sample = [theta_new]
        tries = 0
        while len(sample) < self.policy.angle_sample_size and tries < self.policy.max_tries:
            tries += 1
            candidate = self.proposer.propose(self.g, self.rng)
            if candidate is None or not budget.within_budget(candidate.moves, self.budget_r):
                continue
            if not self._upper_contour(candidate, tracker):
                continue
            sample.append(self._theta_after(candidate.moves))
        return float(np.mean(sample)) >= self.theta, theta_new

    def _upper_contour(self, proposal: Proposal, tracker: StatisticTracker) -> bool:
        if proposal.delta is None:
            proposal.delta = tracker.delta(self.g, proposal.moves)
        if proposal.delta < 0:
            return False
        return proposal.delta > 0 or not self.policy.strict

    def _bound(self, omega_norm: float):
        if self.baseline.gap <= 0:
            return math.inf, False
        return stewart_sun_bound(self.baseline, omega_norm)

    def _record(self, tracker: StatisticTracker, level: int) -> TrajectoryRecord:
        cfg = self.policy.spectral
        omega = spectral_norm_sparse(self.ledger.omega, cfg.tol)
        ss_bound, condition = self._bound(omega.norm)
        spectral_ok = True
        try:
            summary = summarize(self.g, self.degrees, cfg, v_right0=self.v_right, v_left0=self.v_left)
            v_right, v_left = summary.v_right, summary.v_left
            kappa, gamma, lambda1 = summary.kappa, summary.gap, summary.lambda1
        except SpectralError as e:
            logger.warning("Spectral failure at t = %d: %s", self.t, e)
            spectral_ok = False
            iters = cfg.iterations_for(self.g.n)
            right = leading_right_eigenvector(self.g, cfg.tol, iters, start=self.v_right,
                                              reference=self.degrees.d_out_unit, shift=cfg.shift)
            left = leading_left_eigenvector(self.g, cfg.tol, iters, start=self.v_left,
                                            reference=self.degrees.d_in_unit, shift=cfg.shift)
            v_right, v_left = right.vector, left.vector
            kappa, gamma, lambda1 = math.nan, math.nan, right.lambda1
        self.v_right, self.v_left = v_right, v_left
        self.theta = angle(self.degrees.d_out, v_right)
        rotation = angle(self.baseline.v_right, v_right)
        degree_bound = math.nan
        if condition:
            degree_bound = degree_angle_bound(self.theta0, self.baseline.kappa, self.baseline.gap, omega.norm)
        return TrajectoryRecord(
            t=self.t,
            phi=self.primary.value,
            theta_deg_evec=self.theta,
            theta_in_left=angle(self.degrees.d_in, v_left),
            theta_evec_rot=rotation,
            sin_rotation=math.sin(rotation),
            omega_norm=omega.norm,
            omega_cap=participation_bound(self.ledger),
            kappa_t=kappa,
            gamma_t=gamma,
            lambda1_t=lambda1,
            ss_condition=bool(condition),
            ss_bound=ss_bound,
            degree_bound=degree_bound,
            clamped=bool(ss_bound > 1.0),
            spectral_ok=spectral_ok,
            proposals_tried=self.proposals,
            rng_state_digest=rng_state_digest(self.rng),
            level=level,
            phi_level=tracker.value,
        )

    def _snapshot(self):
        return self.t, len(self.records), self.theta, self.v_right, self.v_left, self.accepted_proposals

    def _rollback(self, tracker: StatisticTracker, budget: PerturbationLedger) -> int:
        """Undoes the journaled swaps; returns how many were undone."""
        if not self.journal:
            return 0
        undone = 0
        for moves, delta, primary_delta in reversed(self.journal):
            inverse = [mv.inverse() for mv in reversed(moves)]
            for mv in inverse:
                self.g.apply_swap(mv)
            tracker.apply(self.g, inverse, -delta)
            if self.primary is not tracker:
                self.primary.apply(self.g, inverse, -primary_delta)
            for mv in moves:
                self.ledger.unstep(mv)
                if budget is not self.ledger:
                    budget.unstep(mv)
            undone += len(moves)
        self.rejections["rolled_back"] += len(self.journal)
        self.journal.clear()
        self.t, n_records, self.theta, self.v_right, self.v_left, self.accepted_proposals = self.verified
        del self.records[n_records:]
        self.proposer.on_rollback()
        logger.debug("Connectivity lost; rolled back %d swaps to t = %d", undone, self.t)
        return undone

    def _settle(self, tracker: StatisticTracker, budget: PerturbationLedger) -> int:
        """Checks the journaled swaps once more; returns how many were undone."""
        if self.journal and not is_strongly_connected(self.g):
            self.rejections["scc"] += 1
            return self._rollback(tracker, budget)
        self.journal.clear()
        self.verified = self._snapshot()
        return 0

    def _step(self, tracker: StatisticTracker, budget: PerturbationLedger, phase_room: int, level: int) -> int:
        """One proposal; returns the net number of swaps accepted.

        Zero on rejection, negative when a failed connectivity check rolled
        back earlier swaps.
        """
        self.proposals += 1
        proposal = self.proposer.propose(self.g, self.rng)
        if proposal is None:
            self.rejections["empty"] += 1
            return 0
        moves = proposal.moves
        if len(moves) > phase_room:
            self.rejections["overflow"] += 1
            return 0
        if not budget.within_budget(moves, self.budget_r) or (
                budget is not self.ledger and not self.ledger.within_budget(moves, self.total_r)):
            self.rejections["budget"] += 1
            return 0
        if not self._upper_contour(proposal, tracker):
            self.rejections["contour"] += 1
            return 0
        if self.policy.angle_filter != "off":
            admitted, theta_new = self._angle_admits(proposal, tracker, budget)
            if not admitted:
                self.rejections["angle"] += 1
                return 0

        primary_delta = 0 if self.primary is tracker else self.primary.delta(self.g, moves)
        for mv in moves:
            self.g.apply_swap(mv)
        checked = self.guard.should_check(self.accepted_proposals)
        if checked and not is_strongly_connected(self.g):
            for mv in reversed(moves):
                self.g.apply_swap(mv.inverse())
            self.rejections["scc"] += 1
            return -self._rollback(tracker, budget)

        for mv in moves:
            self.ledger.step(mv)
            if budget is not self.ledger:
                budget.step(mv)
        tracker.apply(self.g, moves, proposal.delta)
        if self.primary is not tracker:
            self.primary.apply(self.g, moves, primary_delta)
        self.proposer.on_accept(proposal)
        self.accepted_proposals += 1
        if self.policy.angle_filter != "off":
            self.theta = theta_new
        if self.guard.mode == "every_k" and not checked:
            self.journal.append((moves, proposal.delta, primary_delta))

        before = self.t // self.stride
        self.t += len(moves)
        if self.t // self.stride > before:
            self.records.append(self._record(tracker, level))
        if checked:
            self.journal.clear()
            self.verified = self._snapshot()
        return len(moves)

    def run_phase(self, tracker: StatisticTracker, proposer: Proposer, r_budget: int, max_accepted: int,
                  budget: Optional[PerturbationLedger] = None, level: int = 0, scope_size: Optional[int] = None,
                  total_r: Optional[int] = None) -> PhaseSummary:
        if self.primary is None:
            self.primary = tracker
        self.proposer = proposer
        self.budget_r = r_budget
        self.total_r = r_budget if total_r is None else total_r
        budget = self.ledger if budget is None else budget
        phi_start = tracker.value
        accepted = 0
        proposals_start = self.proposals
        stop_reason = MAX_ACCEPTED

        with tqdm(total=max_accepted, desc=f"Rewiring ({self.policy.statistic})", leave=False,
                  disable=not self.progress) as pbar:
            while True:
                while accepted < max_accepted:
                    if self.proposals - proposals_start >= self.policy.max_proposals:
                        stop_reason = PROPOSAL_BUDGET
                        break
                    if not proposer.has_candidates(self.g):
                        stop_reason = NO_CANDIDATES
                        break
                    n_acc = self._step(tracker, budget, max_accepted - accepted, level)
                    accepted += n_acc
                    pbar.update(n_acc)
                undone = self._settle(tracker, budget)
                if not undone:
                    break
                accepted -= undone
                pbar.update(-undone)
                stop_reason = MAX_ACCEPTED

        phase = PhaseSummary(level=level, scope_size=self.g.n if scope_size is None else scope_size,
                             accepted=accepted, proposals=self.proposals - proposals_start,
                             stop_reason=stop_reason, phi_start=phi_start, phi_end=tracker.value)
        self.phases.append(phase)
        logger.info("Phase (level %d): %d swaps accepted in %d proposals, stop: %s, phi %.6g -> %.6g",
                    level, accepted, phase.proposals, stop_reason, phi_start, phase.phi_end)
        logger.debug("Rejections so far: %s", self.rejections)
        return phase

    def run(self) -> TrajectoryResult:
        tracker = self.policy.make_tracker(self.g)
        self.phi0 = tracker.value
        proposer = self.policy.make_proposer(tracker)
        phase = self.run_phase(tracker, proposer, self.policy.r_budget, self.policy.max_accepted)
        return self.result(phase.stop_reason)

    def result(self, stop_reason: str) -> TrajectoryResult:
        return TrajectoryResult(graph=self.g, ledger=self.ledger, records=self.records, baseline=self.baseline,
                                theta0=self.theta0, theta0_in=self.theta0_in, phi0=self.phi0,
                                stop_reason=stop_reason, proposals=self.proposals, seed=self.seed,
                                phases=self.phases, rejections=dict(self.rejections))


def run_trajectory(g0: DirectedGraph, policy: RewiringPolicy, recorder_stride: int = 10, seed: int = 0,
                   progress: bool = False) -> TrajectoryResult:
    return TrajectoryRunner(g0, policy, recorder_stride, seed, progress).run()


def _internal_out_degrees(g: DirectedGraph, mask: np.ndarray) -> np.ndarray:
    tails, heads = g.edge_arrays()
    internal = mask[tails] & mask[heads]
    return np.bincount(tails[internal], minlength=g.n)


def run_fractal_core_periphery(g0: DirectedGraph, levels: int, budgets: Sequence[int], seed: int = 0,
                               policy: Optional[RewiringPolicy] = None, recorder_stride: int = 10,
                               branching: int = 2, min_block: int = 4,
                               progress: bool = False) -> TrajectoryResult:
    """Core-periphery rewiring refined recursively inside the periphery.

    Level 0 rewires on the degree-based split of the whole graph. Level l
    cuts every periphery block of level l-1 into `branching` random
    sub-blocks, splits each by internal out-degree and rewires only edges
    internal to the sub-block. Each level has its own participation budget;
    the total ledger aggregates all levels.
    """
    if levels < 1:
        raise ValueError("Fractal rewiring needs at least one level")
    if len(budgets) != levels or any(r < 1 for r in budgets):
        raise ValueError(f"Need {levels} positive per-level budgets, got {list(budgets)}")
    if branching < 2:
        raise ValueError("branching must be at least 2")
    if policy is None:
        policy = RewiringPolicy(statistic="core_periphery", r_budget=budgets[0])
    if policy.statistic != "core_periphery":
        raise ValueError("Fractal rewiring drives the core-periphery statistic")

    runner = TrajectoryRunner(g0, policy, recorder_stride, seed, progress)
    total_r = int(sum(budgets))
    g = runner.g

    split = policy.core_split(g)
    tracker = CorePeripheryTracker(g, split, policy.cp_allow_peripheral_head)
    runner.phi0 = tracker.value
    runner.run_phase(tracker, CorePeripheryProposer(tracker, policy.max_tries), budgets[0],
                     policy.max_accepted, PerturbationLedger(g.n), level=0,
                     scope_size=int(split.scope.sum()), total_r=total_r)
    peripheries = [split.periphery]

    for level in range(1, levels):
        level_ledger = PerturbationLedger(g.n)
        next_peripheries = []
        for block in peripheries:
            members = runner.rng.permutation(np.flatnonzero(block))
            for part in np.array_split(members, branching):
                if len(part) < min_block:
                    logger.info("Level %d: skipping sub-block of %d vertices (fewer than %d)",
                                level, len(part), min_block)
                    continue
                mask = np.zeros(g.n, dtype=bool)
                mask[part] = True
                sub = CoreSplit.by_degree(_internal_out_degrees(g, mask), policy.core_fraction, scope=mask)
                try:
                    sub_tracker = CorePeripheryTracker(g, sub, policy.cp_allow_peripheral_head)
                except ValueError:
                    logger.info("Level %d: skipping sub-block of %d vertices with no internal edges",
                                level, len(part))
                    continue
                if not sub_tracker.ll_count:
                    logger.info("Level %d: skipping sub-block of %d vertices with no internal periphery edge",
                                level, len(part))
                    next_peripheries.append(sub.periphery)
                    continue
                runner.run_phase(sub_tracker, CorePeripheryProposer(sub_tracker, policy.max_tries),
                                 budgets[level], policy.max_accepted, level_ledger, level=level,
                                 scope_size=len(part), total_r=total_r)
                next_peripheries.append(sub.periphery)
        peripheries = next_peripheries

    exhausted = any(p.stop_reason == PROPOSAL_BUDGET for p in runner.phases)
    return runner.result(PROPOSAL_BUDGET if exhausted else COMPLETED)
