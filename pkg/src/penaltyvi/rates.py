"""Log-log rate fits for convergence tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RateFitError(ValueError):
    """Too few or nonpositive points for a log-log fit."""


@dataclass(frozen=True)
class RateFit:
    pairs: tuple
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict:
        return {
            "pairs": [[float(a), float(b)] for a, b in self.pairs],
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
        }


def fit_rate(pairs) -> RateFit:
    """Least-squares line through ``(log eps, log value)``.

    Parameters
    ----------
    pairs : sequence of (epsilon, value)
        At least three points, all positive.

    Returns
    -------
    RateFit
        ``value ~ exp(intercept) * eps ** slope``.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise RateFitError("pairs must be a sequence of (epsilon, value)")
    if len(arr) < 3:
        raise RateFitError(f"a rate fit needs at least 3 points, got {len(arr)}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise RateFitError("rate fit needs finite positive epsilons and values")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return RateFit(
        pairs=tuple((float(a), float(b)) for a, b in arr),
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(min(1.0, max(0.0, r2))),
    )
