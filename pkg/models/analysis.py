import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.bounds import degree_angle_bound
from models.rewire import TrajectoryRecord

logger = logging.getLogger(__name__)

SLACK_TOL = 1e-6
NORM_TOL = 1e-9


@dataclass
class BoundRow:
    t: int
    phi: float
    theta: float
    omega_norm: float
    omega_cap: float
    ss_bound: float
    condition: bool
    slack: float
    sin_rotation: float
    degree_bound: float
    degree_slack: float


@dataclass
class BoundReport:
    kappa0: float
    gamma0: float
    lambda1_0: float
    theta0: float
    rows: List[BoundRow]
    kappa_star: float
    gamma_star: float

    @property
    def conforming(self) -> List[BoundRow]:
        return [r for r in self.rows if r.condition]

    @property
    def min_slack(self) -> float:
        slacks = [r.slack for r in self.conforming]
        return min(slacks) if slacks else math.nan

    @property
    def violations(self) -> int:
        return sum(1 for r in self.conforming
                   if r.slack < -SLACK_TOL or r.degree_slack < -SLACK_TOL)

    @property
    def participation_violations(self) -> int:
        return sum(1 for r in self.rows if r.omega_norm > r.omega_cap + NORM_TOL)

    def to_frame(self) -> pd.DataFrame:
        columns = ["t", "phi", "theta", "omega_norm", "omega_cap", "ss_bound", "condition", "slack"]
        frame = pd.DataFrame([{c: getattr(r, c) for c in columns} for r in self.rows], columns=columns)
        frame["condition"] = frame["condition"].astype(bool)
        return frame

    def summary(self) -> dict:
        return {
            "kappa0": self.kappa0,
            "gamma0": self.gamma0,
            "lambda1_0": self.lambda1_0,
            "theta0": self.theta0,
            "records": len(self.rows),
            "conforming": len(self.conforming),
            "min_slack": self.min_slack,
            "violations": self.violations,
            "participation_violations": self.participation_violations,
            "kappa_star": self.kappa_star,
            "gamma_star": self.gamma_star,
        }


def build_bound_report(baseline: dict, theta0: float, records: Sequence[TrajectoryRecord]) -> BoundReport:
    """Per-record Stewart-Sun and degree-angle slacks.

    `baseline` holds the baseline spectral summary as written in trajectory
    headers (lambda1, gap, kappa).
    """
    # null marks a non-finite value: an unbounded kappa or an undefined gap
    kappa0 = math.inf if baseline["kappa"] is None else float(baseline["kappa"])
    gamma0 = math.nan if baseline["gap"] is None else float(baseline["gap"])
    rows = []
    for rec in records:
        slack = rec.ss_bound - rec.sin_rotation
        degree_bound, degree_slack = math.nan, math.inf
        if rec.ss_condition:
            degree_bound = degree_angle_bound(theta0, kappa0, gamma0, rec.omega_norm)
            degree_slack = degree_bound - rec.theta_deg_evec
        rows.append(BoundRow(t=rec.t, phi=rec.phi, theta=rec.theta_deg_evec, omega_norm=rec.omega_norm,
                             omega_cap=rec.omega_cap, ss_bound=rec.ss_bound, condition=rec.ss_condition,
                             slack=slack, sin_rotation=rec.sin_rotation, degree_bound=degree_bound,
                             degree_slack=degree_slack))

    kappas = [kappa0] + [r.kappa_t for r in records if r.spectral_ok and not math.isnan(r.kappa_t)]
    gammas = [gamma0] + [r.gamma_t for r in records if r.spectral_ok and not math.isnan(r.gamma_t)]
    report = BoundReport(kappa0=kappa0, gamma0=gamma0, lambda1_0=float(baseline["lambda1"]), theta0=theta0,
                         rows=rows, kappa_star=max(kappas), gamma_star=min(gammas))
    if report.violations:
        logger.warning("%d bound violation(s) among %d conforming records", report.violations,
                       len(report.conforming))
    return report


@dataclass
class TrajectorySeries:
    """phi and theta of one trajectory with the baseline at t = 0."""
    index: int
    t: np.ndarray
    phi: np.ndarray
    theta: np.ndarray

    @classmethod
    def from_records(cls, index: int, phi0: float, theta0: float,
                     records: Sequence[TrajectoryRecord]) -> "TrajectorySeries":
        return cls(index=index,
                   t=np.array([0] + [r.t for r in records], dtype=np.int64),
                   phi=np.array([phi0] + [r.phi for r in records], dtype=np.float64),
                   theta=np.array([theta0] + [r.theta_deg_evec for r in records], dtype=np.float64))

    def on_grid(self, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        # last state at or before each grid point; early stops carry forward
        pos = np.searchsorted(self.t, grid, side="right") - 1
        return self.phi[pos], self.theta[pos]


@dataclass
class MomentSummary:
    grid: np.ndarray
    mean_phi: np.ndarray
    mean_phi2: np.ndarray
    var_phi: np.ndarray
    mean_theta: np.ndarray
    mean_theta2: np.ndarray
    mean_abs_phi: np.ndarray
    half_width_phi: np.ndarray
    half_width_theta: np.ndarray
    ensemble_size: int
    variance_first_decrease: Optional[int] = None

    def phi_moments_monotone(self, shift: float = 0.0) -> bool:
        """E[phi] and E[phi^2] nondecreasing on the grid, for phi + shift >= 0.

        The second moment of the shifted statistic is recovered exactly from
        the first two moments.
        """
        m1 = self.mean_phi + shift
        m2 = self.mean_phi2 + 2 * shift * self.mean_phi + shift * shift
        return bool((np.diff(m1) >= 0).all() and (np.diff(m2) >= 0).all())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.grid,
            "mean_phi": self.mean_phi,
            "mean_phi2": self.mean_phi2,
            "var_phi": self.var_phi,
            "mean_theta": self.mean_theta,
            "mean_theta2": self.mean_theta2,
            "mean_abs_phi": self.mean_abs_phi,
            "half_width_phi": self.half_width_phi,
            "half_width_theta": self.half_width_theta,
        })


def default_grid(series: Sequence[TrajectorySeries]) -> np.ndarray:
    return np.unique(np.concatenate([s.t for s in series]))


def ensemble_moments(series: Sequence[TrajectorySeries], grid: Optional[Sequence[int]] = None) -> MomentSummary:
    if not series:
        raise ValueError("Cannot summarize an empty ensemble")
    ordered = sorted(series, key=lambda s: s.index)
    grid = default_grid(ordered) if grid is None else np.asarray(grid, dtype=np.int64)
    if (grid < 0).any():
        raise ValueError("Grid points must be nonnegative")

    phis, thetas = zip(*(s.on_grid(grid) for s in ordered))
    phi = np.vstack(phis)
    theta = np.vstack(thetas)
    R = phi.shape[0]

    mean_phi = phi.sum(axis=0) / R
    mean_phi2 = (phi * phi).sum(axis=0) / R
    var_phi = ((phi - mean_phi) ** 2).sum(axis=0) / R
    mean_theta = theta.sum(axis=0) / R
    mean_theta2 = (theta * theta).sum(axis=0) / R
    if R > 1:
        half_phi = 1.96 * phi.std(axis=0, ddof=1) / math.sqrt(R)
        half_theta = 1.96 * theta.std(axis=0, ddof=1) / math.sqrt(R)
    else:
        half_phi = np.zeros(len(grid))
        half_theta = np.zeros(len(grid))

    decreases = np.flatnonzero(np.diff(var_phi) < 0)
    first_decrease = int(decreases[0]) + 1 if len(decreases) else None
    if first_decrease is not None:
        logger.info("Variance of phi first decreases at grid index %d (t = %d)",
                    first_decrease, int(grid[first_decrease]))

    return MomentSummary(grid=grid, mean_phi=mean_phi, mean_phi2=mean_phi2, var_phi=var_phi,
                         mean_theta=mean_theta, mean_theta2=mean_theta2,
                         mean_abs_phi=np.abs(phi).sum(axis=0) / R,
                         half_width_phi=half_phi, half_width_theta=half_theta,
                         ensemble_size=R, variance_first_decrease=first_decrease)


@dataclass
class EnvelopeInputs:
    statistic: str
    r_budget: int
    kappa_star: float
    gamma_star: float
    d_out: np.ndarray
    d_in: np.ndarray
    p: str = "out"
    q: str = "in"
    nu: Optional[float] = None
    block_constant: float = 1.0
    alpha_configured: Optional[float] = None
    alpha_hill: Optional[float] = None


@dataclass
class EnvelopeEstimate:
    M_hat: float
    composite: float
    ratio: float
    lambda_phi: float
    kappa_star: float
    gamma_star: float
    r_budget: int
    d_max_out: int
    d_max_in: int
    alpha_configured: Optional[float] = None
    alpha_hill: Optional[float] = None
    half_grid_factor: float = math.nan
    lambda_inputs: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "lambda_inputs"}
        out.update({f"lambda_{k}": v for k, v in self.lambda_inputs.items()})
        return out


def leverage_scale(inputs: EnvelopeInputs) -> Tuple[float, Dict[str, float]]:
    d_max_out, d_max_in = int(np.max(inputs.d_out)), int(np.max(inputs.d_in))
    if inputs.statistic == "assortativity":
        if inputs.nu is None:
            raise ValueError("Assortativity leverage needs nu")
        d_p = d_max_out if inputs.p == "out" else d_max_in
        d_q = d_max_out if inputs.q == "out" else d_max_in
        return inputs.nu * d_p * d_q, {"nu": inputs.nu, "d_max_p": d_p, "d_max_q": d_q}
    scale = inputs.block_constant * d_max_out * d_max_in
    return scale, {"block_constant": inputs.block_constant, "d_max_out": d_max_out, "d_max_in": d_max_in}


def _envelope_ratio(summary: MomentSummary) -> np.ndarray:
    return summary.mean_theta / (1.0 + summary.mean_abs_phi)


def fit_envelope(summary: MomentSummary, inputs: EnvelopeInputs) -> EnvelopeEstimate:
    """Smallest M with E[theta_t] <= M (1 + E|phi_t|) on the grid, next to (kappa*/gamma*) r Lambda_phi."""
    if not len(summary.grid):
        raise ValueError("Cannot fit an envelope to an empty grid")
    ratios = _envelope_ratio(summary)
    M_hat = float(ratios.max())

    half = len(ratios) // 2
    growth = math.nan
    if half >= 1:
        first = float(ratios[:half].max())
        second = float(ratios[half:].max())
        if first > 0:
            growth = second / first
        elif second == 0:
            growth = 1.0
        else:
            growth = math.inf

    lambda_phi, lambda_inputs = leverage_scale(inputs)
    composite = inputs.kappa_star / inputs.gamma_star * inputs.r_budget * lambda_phi \
        if inputs.gamma_star > 0 else math.inf
    ratio = M_hat / composite if composite > 0 and math.isfinite(composite) else math.nan
    return EnvelopeEstimate(M_hat=M_hat, composite=composite, ratio=ratio, lambda_phi=lambda_phi,
                            kappa_star=inputs.kappa_star, gamma_star=inputs.gamma_star,
                            r_budget=inputs.r_budget, d_max_out=int(np.max(inputs.d_out)),
                            d_max_in=int(np.max(inputs.d_in)), alpha_configured=inputs.alpha_configured,
                            alpha_hill=inputs.alpha_hill, half_grid_factor=growth,
                            lambda_inputs=lambda_inputs)


def envelope_scaling(points: Sequence[Tuple[int, float, float]]) -> pd.DataFrame:
    """Least-squares slope of log M_hat against log n, per tail exponent.

    `points` are (n, alpha, M_hat); the slope is reported next to 2/alpha.
    """
    frame = pd.DataFrame(points, columns=["n", "alpha", "M_hat"])
    rows = []
    for alpha, group in frame.groupby("alpha", sort=True):
        group = group[group["M_hat"] > 0]
        slope = math.nan
        if group["n"].nunique() >= 2:
            slope = float(np.polyfit(np.log(group["n"]), np.log(group["M_hat"]), 1)[0])
        rows.append({"alpha": alpha, "points": len(group), "slope": slope, "expected": 2.0 / alpha})
    return pd.DataFrame(rows, columns=["alpha", "points", "slope", "expected"])
