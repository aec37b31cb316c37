"""Best-uncovered-reward and cumulative-regret series."""

from __future__ import annotations

import numpy as np


def compute_bur(true_totals, r_star: float | None = None):
    """Running maximum of the true total reward.

    Returns the raw series, or ``(raw, raw / r_star)`` when ``r_star`` is given.
    """
    totals = np.asarray(true_totals, dtype=float)
    if totals.size == 0:
        raise ValueError("empty reward history")
    bur = np.maximum.accumulate(totals)
    if r_star is None:
        return bur
    return bur, bur / r_star


def compute_cmr(true_totals, r_star: float) -> np.ndarray:
    """Cumulative shortfall ``sum_j (r_star - total_j)``."""
    totals = np.asarray(true_totals, dtype=float)
    return np.cumsum(r_star - totals)
