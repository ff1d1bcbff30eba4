import math
from typing import Tuple

from models.perturbation import PerturbationLedger
from models.spectral import SpectralSummary


def stewart_sun_bound(baseline: SpectralSummary, omega_norm: float) -> Tuple[float, bool]:
    """(kappa * ||Omega|| / gamma, ||Omega|| < gamma / kappa) at the baseline.

    The bound may exceed 1; callers clamp before taking arcsin.
    """
    return eigenvector_rotation_bound(baseline.kappa, baseline.gap, omega_norm)


def eigenvector_rotation_bound(kappa: float, gamma: float, omega_norm: float) -> Tuple[float, bool]:
    if gamma <= 0:
        raise ValueError("Rotation bound needs a simple leading eigenvalue (gamma > 0)")
    if kappa < 1 - 1e-9:
        raise ValueError(f"Distortion factor must be at least 1, got {kappa}")
    return kappa * omega_norm / gamma, omega_norm < gamma / kappa


def participation_bound(ledger: PerturbationLedger) -> float:
    return 2.0 * ledger.s_max


def degree_angle_bound(theta0: float, kappa: float, gamma: float, omega_norm: float) -> float:
    """theta0 + arcsin(min(1, kappa ||Omega|| / gamma)), clamped to [0, pi/2].

    NaN when ||Omega|| >= gamma / kappa, where the bound does not apply.
    """
    bound, condition = eigenvector_rotation_bound(kappa, gamma, omega_norm)
    if not condition:
        return math.nan
    return min(max(theta0 + math.asin(min(1.0, bound)), 0.0), math.pi / 2)
