"""
Exponential-family belief types used by the adaptive filter.

Two families appear: a Gaussian over the state vector and an inverse
Wishart over SPD covariance matrices (the predicted state covariance and
the measurement noise covariance).  Moments (mean/covariance and
dof/scale) are the stored representation; natural-parameter views are
computed on demand.

All matrix results that are mathematically symmetric are re-symmetrized
by averaging with the transpose so that round-off cannot accumulate over
hundreds of filter iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix required to be SPD fails its Cholesky test."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Average a square matrix with its transpose."""
    return 0.5 * (a + a.T)


def cholesky_lower(p: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower-triangular Cholesky factor L with L @ L.T == p.

    SPD-ness is tested by Cholesky success itself; on failure the
    smallest eigenvalue (from a fallback symmetric eigensolve) is
    reported in the error message.
    """
    p = np.asarray(p, dtype=float)
    try:
        return np.linalg.cholesky(p)
    except np.linalg.LinAlgError:
        eigmin = float(np.linalg.eigvalsh(symmetrize(p)).min())
        raise NotPositiveDefiniteError(
            f"{what} is not positive definite (smallest eigenvalue {eigmin:.6e})"
        ) from None


def spd_inverse(p: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Inverse of an SPD matrix via Cholesky, symmetrized."""
    L = cholesky_lower(p, what)
    inv = cho_solve((L, True), np.eye(L.shape[0]))
    return symmetrize(inv)


def is_symmetric(p: np.ndarray, rtol: float = 1e-12) -> bool:
    p = np.asarray(p, dtype=float)
    denom = max(np.linalg.norm(p), 1e-300)
    return np.linalg.norm(p - p.T) / denom <= rtol


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian state belief: mean vector and SPD covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"covariance shape {cov.shape} does not match state dimension {mean.size}"
            )
        if not is_symmetric(cov, rtol=1e-12):
            raise ValueError("covariance is not symmetric")
        cholesky_lower(cov, "state covariance")  # SPD check
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class InverseWishartBelief:
    """Inverse Wishart belief over an SPD matrix: dof nu and scale Psi.

    The dof must satisfy nu > p + 1 so the expected precision
    (nu - p - 1) * Psi^{-1} exists.
    """

    dof: float
    scale: np.ndarray

    def __post_init__(self):
        scale = np.asarray(self.scale, dtype=float)
        p = scale.shape[0]
        if scale.shape != (p, p):
            raise ValueError(f"scale must be square, got shape {scale.shape}")
        if not self.dof > p + 1:
            raise ValueError(
                f"inverse Wishart dof must exceed dim + 1 (got dof={self.dof}, dim={p})"
            )
        cholesky_lower(scale, "inverse Wishart scale")
        object.__setattr__(self, "dof", float(self.dof))
        object.__setattr__(self, "scale", scale)

    @property
    def dim(self) -> int:
        return self.scale.shape[0]


def gaussian_to_natural(mean: np.ndarray, covariance: np.ndarray):
    """Natural parameters of a Gaussian: (P^{-1} m, -0.5 P^{-1})."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    prec = spd_inverse(covariance, "covariance")
    return prec @ mean, -0.5 * prec


def natural_to_gaussian(lam1: np.ndarray, lam2: np.ndarray):
    """Invert gaussian_to_natural: covariance = (-2 lam2)^{-1}, mean = cov @ lam1.

    A non-SPD -2*lam2 signals a diverged mirror step upstream and raises
    NotPositiveDefiniteError.
    """
    lam1 = np.asarray(lam1, dtype=float).reshape(-1)
    cov = spd_inverse(-2.0 * np.asarray(lam2, dtype=float), "negated natural precision")
    return cov @ lam1, cov


def iw_expected_precision(belief: InverseWishartBelief) -> np.ndarray:
    """E[S^{-1}] = (nu - p - 1) * Psi^{-1} for S ~ IW(nu, Psi)."""
    factor = belief.dof - belief.dim - 1.0
    return factor * spd_inverse(belief.scale, "inverse Wishart scale")


def iw_to_natural(belief: InverseWishartBelief, p: int | None = None):
    """Natural parameters of an inverse Wishart: (-0.5(nu + p + 1), -0.5 Psi)."""
    if p is None:
        p = belief.dim
    return -0.5 * (belief.dof + p + 1.0), -0.5 * belief.scale


def iw_from_natural(lam1: float, lam2: np.ndarray, p: int) -> InverseWishartBelief:
    """Invert iw_to_natural."""
    return InverseWishartBelief(dof=-2.0 * lam1 - p - 1.0, scale=-2.0 * np.asarray(lam2, dtype=float))


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L @ x = b with L lower triangular."""
    return solve_triangular(L, b, lower=True)
