import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from models.graph import DegreeSequenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DegreeModel:
    """Parsed degree specification: regular:<d>, powerlaw:<alpha>:<d_min>:<d_max_cap> or file:<path>."""
    kind: str
    d: int = 0
    alpha: Optional[float] = None
    d_min: int = 1
    d_max_cap: int = 0
    path: Optional[str] = None

    @classmethod
    def parse(cls, spec: str, alpha: Optional[float] = None, d_min: Optional[int] = None,
              d_max_cap: Optional[int] = None) -> "DegreeModel":
        """Flag values fill in fields missing from a bare 'powerlaw' spec."""
        kind, _, rest = spec.partition(":")
        if alpha is not None and alpha <= 1:
            raise ValueError(f"Tail exponent alpha must exceed 1, got {alpha}")
        if kind == "regular":
            try:
                d = int(rest)
            except ValueError:
                raise ValueError(f"Degree spec {spec!r} must look like 'regular:<d>'")
            if d < 1:
                raise ValueError("Regular degree must be at least 1")
            return cls("regular", d=d)
        if kind == "powerlaw":
            parts = rest.split(":") if rest else []
            if parts and len(parts) != 3:
                raise ValueError(f"Degree spec {spec!r} must look like 'powerlaw:<alpha>:<d_min>:<d_max_cap>'")
            try:
                a = float(parts[0]) if parts else alpha
                lo = int(parts[1]) if parts else (d_min if d_min is not None else 1)
                hi = int(parts[2]) if parts else d_max_cap
            except ValueError:
                raise ValueError(f"Non-numeric field in degree spec {spec!r}")
            if a is None or hi is None:
                raise ValueError("Power-law degrees need alpha and d_max_cap")
            if a <= 1:
                raise ValueError(f"Tail exponent alpha must exceed 1, got {a}")
            if lo < 1 or hi < lo:
                raise ValueError(f"Need 1 <= d_min <= d_max_cap, got {lo}, {hi}")
            return cls("powerlaw", alpha=a, d_min=lo, d_max_cap=hi)
        if kind == "file":
            if not rest:
                raise ValueError("Degree spec 'file:' needs a path")
            return cls("file", path=rest)
        raise ValueError(f"Unknown degree model {spec!r}; use regular:<d>, powerlaw:... or file:<path>")


def regular_degrees(n: int, d: int) -> Tuple[np.ndarray, np.ndarray]:
    if d > n - 1:
        raise DegreeSequenceError(f"Regular degree {d} exceeds n - 1 = {n - 1}")
    seq = np.full(n, d, dtype=np.int64)
    return seq, seq.copy()


def _balance(d_out: np.ndarray, d_in: np.ndarray, d_min: int, cap: int) -> int:
    # nudge the last entries until both sums agree; returns the number of unit changes
    changes = 0
    diff = int(d_out.sum() - d_in.sum())
    n = len(d_out)
    i = n - 1
    stalled = 0
    while diff != 0:
        low, high = (d_in, d_out) if diff > 0 else (d_out, d_in)
        if low[i] < cap:
            low[i] += 1
        elif high[i] > d_min:
            high[i] -= 1
        else:
            stalled += 1
            if stalled > n:
                raise DegreeSequenceError("Cannot balance the degree sums within [d_min, d_max_cap]")
            i = (i - 1) % n
            continue
        stalled = 0
        changes += 1
        diff += -1 if diff > 0 else 1
        i = (i - 1) % n
    return changes


def powerlaw_degrees(n: int, alpha: float, d_min: int, d_max_cap: int,
                     rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Independent out/in sequences with P(d) proportional to d^-alpha on [d_min, cap]."""
    if alpha <= 1:
        raise ValueError(f"Tail exponent alpha must exceed 1, got {alpha}")
    cap = min(d_max_cap, n - 1)
    if d_min > cap:
        raise DegreeSequenceError(f"d_min = {d_min} exceeds the usable cap {cap}")
    support = np.arange(d_min, cap + 1)
    pmf = support.astype(np.float64) ** -alpha
    cdf = np.cumsum(pmf / pmf.sum())
    cdf[-1] = 1.0

    d_out = support[np.searchsorted(cdf, rng.random(n), side="right").clip(max=len(support) - 1)]
    d_in = support[np.searchsorted(cdf, rng.random(n), side="right").clip(max=len(support) - 1)]
    d_out, d_in = d_out.astype(np.int64), d_in.astype(np.int64)
    changes = _balance(d_out, d_in, d_min, cap)
    if changes:
        logger.info("Balanced degree sums with %d unit adjustment(s) at the end of the sequences", changes)
    return d_out, d_in


def hill_exponent(degrees, top_fraction: float = 0.1) -> float:
    """Tail exponent 1 + 1/h from the Hill estimator over the top order statistics."""
    x = np.sort(np.asarray(degrees, dtype=np.float64))[::-1]
    x = x[x > 0]
    k = max(2, int(top_fraction * len(x)))
    if len(x) <= k:
        return math.nan
    h = float(np.mean(np.log(x[:k] / x[k])))
    if h <= 0:
        logger.debug("Hill estimator is degenerate (flat tail)")
        return math.nan
    return 1.0 + 1.0 / h
