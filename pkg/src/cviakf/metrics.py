"""
RMSE / ARMSE accounting over Monte Carlo runs.

RMSE(k) = sqrt( (1/M) sum_i [ (a_i - b_i)^2 + (c_i - d_i)^2 ] ) where
the two components are the selected state pair (positions or
velocities); ARMSE is the plain time average of the RMSE series, with
no burn-in exclusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import POS_IDX, VEL_IDX


def rmse_series(estimates: np.ndarray, truths: np.ndarray,
                components: tuple[int, int]) -> np.ndarray:
    """Per-step RMSE over M runs for a pair of state components.

    ``estimates`` and ``truths`` have shape (M, N, n).
    """
    estimates = np.asarray(estimates, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if estimates.shape != truths.shape:
        raise ValueError(f"shape mismatch: {estimates.shape} vs {truths.shape}")
    if estimates.ndim != 3:
        raise ValueError(f"expected (runs, steps, state) arrays, got shape {estimates.shape}")
    i, j = components
    err = estimates - truths
    sq = err[:, :, i] ** 2 + err[:, :, j] ** 2
    return np.sqrt(sq.mean(axis=0))


def position_rmse(estimates: np.ndarray, truths: np.ndarray) -> np.ndarray:
    return rmse_series(estimates, truths, POS_IDX)


def velocity_rmse(estimates: np.ndarray, truths: np.ndarray) -> np.ndarray:
    return rmse_series(estimates, truths, VEL_IDX)


def armse(series: np.ndarray) -> float:
    """Time average of an RMSE series."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("cannot average an empty RMSE series")
    return float(series.mean())


@dataclass
class MetricTable:
    """Per-method summary: position/velocity ARMSE and mean iteration count."""

    rows: dict[str, dict[str, float]] = field(default_factory=dict)

    def add(self, method: str, position_armse: float, velocity_armse: float,
            mean_iterations: float) -> None:
        for name, value in (("position_armse", position_armse),
                            ("velocity_armse", velocity_armse),
                            ("mean_iterations", mean_iterations)):
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} for {method} must be finite and >= 0, got {value}")
        self.rows[method] = {
            "position_armse": float(position_armse),
            "velocity_armse": float(velocity_armse),
            "mean_iterations": float(mean_iterations),
        }
