"""
Filtering algorithms.

Three updates live here:

* ``update_linear``: fixed point of a coordinate-ascent cycle that
  alternates a Gaussian state refresh (information form, with noise
  covariances replaced by their expected precisions) with inverse
  Wishart hyperparameter refreshes for the predicted covariance and the
  measurement noise.

* ``update_nonlinear``: the same hyperparameter refreshes, but the
  Gaussian state step becomes a stochastic mirror-descent iteration with
  reparameterized Monte Carlo gradients and a compensated precision
  step that keeps the posterior covariance positive definite for any
  learning rate in (0, 1].

* ``kf_update_known_noise`` / ``ekf_update_known_noise``: ordinary
  (extended) Kalman updates for the known-noise baselines.

All functions are pure: beliefs go in, new beliefs come out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distributions import (
    GaussianBelief,
    InverseWishartBelief,
    cholesky_lower,
    iw_expected_precision,
    solve_lower,
    spd_inverse,
    symmetrize,
)
from .models import MeasurementModel, TransitionModel, measure, measure_jacobian, wrap_residual


@dataclass(frozen=True)
class FilterConfig:
    """All tuning constants of the adaptive filter."""

    nominal_q: np.ndarray
    nominal_r: np.ndarray
    tau_p: float = 3.0
    tau_r: float = 3.0
    rho_r: float = 1.0 - math.exp(-4.0)
    conv_threshold: float = 1e-7
    max_iters: int = 500
    learning_rate: float = 0.23
    sample_count: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.tau_p <= 0 or self.tau_r <= 0:
            raise ValueError("tau_p and tau_r must be positive")
        if not 0.0 < self.rho_r <= 1.0:
            raise ValueError(f"rho_r must lie in (0, 1], got {self.rho_r}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        object.__setattr__(self, "nominal_q", np.asarray(self.nominal_q, dtype=float))
        object.__setattr__(self, "nominal_r", np.asarray(self.nominal_r, dtype=float))


@dataclass(frozen=True)
class JointBelief:
    """Joint belief: Gaussian state, IW predicted covariance, IW measurement noise."""

    state: GaussianBelief
    pred_cov: InverseWishartBelief
    meas_noise: InverseWishartBelief


@dataclass(frozen=True)
class UpdateResult:
    """Outcome of one measurement update."""

    belief: JointBelief
    iterations: int
    converged: bool

    def __iter__(self):
        # allow (belief, iterations) unpacking
        return iter((self.belief, self.iterations))


def initial_joint_belief(mean: np.ndarray, covariance: np.ndarray,
                         config: FilterConfig) -> JointBelief:
    """Starting belief: given Gaussian plus IW priors scaled by tau_p / tau_r."""
    state = GaussianBelief(mean, covariance)
    n = state.dim
    m = config.nominal_r.shape[0]
    pred_cov = InverseWishartBelief(dof=n + config.tau_p + 1.0,
                                    scale=config.tau_p * state.covariance)
    meas_noise = InverseWishartBelief(dof=config.tau_r + m + 1.0,
                                      scale=config.tau_r * config.nominal_r)
    return JointBelief(state=state, pred_cov=pred_cov, meas_noise=meas_noise)


def predict(prior: JointBelief, transition: TransitionModel,
            config: FilterConfig) -> JointBelief:
    """Time update of the joint belief through the linear CV transition."""
    F = transition.transition_matrix
    n = prior.state.dim
    m = prior.meas_noise.dim

    x_pred = F @ prior.state.mean
    p_pred = symmetrize(F @ prior.state.covariance @ F.T + config.nominal_q)

    u_pred = n + config.tau_p + 1.0
    U_pred = config.tau_p * p_pred

    v_pred = config.rho_r * (prior.meas_noise.dof - m - 1.0) + m + 1.0
    V_pred = config.rho_r * prior.meas_noise.scale

    return JointBelief(
        state=GaussianBelief(x_pred, p_pred),
        pred_cov=InverseWishartBelief(u_pred, U_pred),
        meas_noise=InverseWishartBelief(v_pred, V_pred),
    )


def converged(prev: JointBelief, nxt: JointBelief, delta: float) -> bool:
    """True iff the relative change of the state mean is below delta.

    The mean is the last quantity computed in each cycle, so once it has
    settled the covariance and IW scales it was computed from have
    settled too (the final state step is evaluated from the final
    hyperparameter refresh, which keeps the fixed point exact).
    """
    dx = np.linalg.norm(nxt.state.mean - prev.state.mean)
    return dx / (1.0 + np.linalg.norm(prev.state.mean)) < delta


def _refresh_hyperparameters(pred: JointBelief, x_new: np.ndarray, p_new: np.ndarray,
                             a_matrix: np.ndarray) -> tuple[InverseWishartBelief, InverseWishartBelief]:
    """IW refreshes: dof + 1, scale + spread (state spread C for U, residual spread A for V)."""
    dx = x_new - pred.state.mean
    c_matrix = np.outer(dx, dx) + p_new
    pred_cov = InverseWishartBelief(pred.pred_cov.dof + 1.0,
                                    symmetrize(pred.pred_cov.scale + c_matrix))
    meas_noise = InverseWishartBelief(pred.meas_noise.dof + 1.0,
                                      symmetrize(pred.meas_noise.scale + a_matrix))
    return pred_cov, meas_noise


def update_linear(pred: JointBelief, y: np.ndarray, H: np.ndarray,
                  config: FilterConfig,
                  pinned_expectations: tuple[np.ndarray, np.ndarray] | None = None
                  ) -> UpdateResult:
    """Measurement update for linear models.

    With ``pinned_expectations=(pred_precision, meas_precision)`` the
    expected precisions are held fixed, which collapses the cycle to a
    single information-filter step (plus one hyperparameter refresh).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    H = np.asarray(H, dtype=float)
    x_pred = pred.state.mean

    if pinned_expectations is not None:
        ep, er = pinned_expectations
        prec_new = symmetrize(ep + H.T @ er @ H)
        p_new = spd_inverse(prec_new, "posterior precision")
        x_new = p_new @ (ep @ x_pred + H.T @ er @ y)
        resid = y - H @ x_new
        a_matrix = np.outer(resid, resid) + H @ p_new @ H.T
        pred_cov, meas_noise = _refresh_hyperparameters(pred, x_new, p_new, a_matrix)
        return UpdateResult(JointBelief(GaussianBelief(x_new, p_new), pred_cov, meas_noise), 1, True)

    # Each cycle refreshes the IW factors from the current state belief
    # first, then takes the state step with the refreshed expectations.
    # Starting the cycle from q = predicted, the first refresh leaves the
    # expected predicted precision at its prior value and books the whole
    # innovation against the measurement noise; the reverse order starts
    # the state step overconfident in the measurement and can capture the
    # cycle in a spurious measurement-trusting fixed point.
    x, p = x_pred, pred.state.covariance
    current = pred
    for r in range(1, config.max_iters + 1):
        resid = y - H @ x
        a_matrix = np.outer(resid, resid) + H @ p @ H.T
        pred_cov, meas_noise = _refresh_hyperparameters(pred, x, p, a_matrix)

        ep = iw_expected_precision(pred_cov)
        er = iw_expected_precision(meas_noise)
        prec_new = symmetrize(ep + H.T @ er @ H)
        p_new = spd_inverse(prec_new, "posterior precision")
        x_new = p_new @ (ep @ x_pred + H.T @ er @ y)

        nxt = JointBelief(GaussianBelief(x_new, p_new), pred_cov, meas_noise)
        done = converged(current, nxt, config.conv_threshold)
        current = nxt
        x, p = x_new, p_new
        if done:
            return UpdateResult(current, r, True)
    return UpdateResult(current, config.max_iters, False)


def sampled_gradients(model: MeasurementModel, y: np.ndarray, x: np.ndarray,
                      L: np.ndarray, er: np.ndarray, eps: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterized Monte Carlo gradients of the expected measurement misfit.

    ``eps`` holds S standard-normal draws of shape (S, n); the sampled
    states are x + L @ eps[s].  Returns (grad_mean, grad_cov) where
    grad_cov is the raw (unsymmetrized) estimate.
    """
    samples = x + eps @ L.T
    resid = wrap_residual(model, y - measure(model, samples))
    jac = measure_jacobian(model, samples)
    weighted = resid @ er  # (S, m)
    s = eps.shape[0]
    grad_mean = -(2.0 / s) * np.einsum("smn,sm->n", jac, weighted)
    # d/dL of the sampled objective: (1/S) sum_s grad_phi(x + L eps_s) eps_s^T
    grad_l = -(2.0 / s) * np.einsum("smn,sm,sp->np", jac, weighted, eps)
    # Pull back through the Cholesky map P -> L: with A = L' grad_l, the
    # lower-half/half-diagonal mask of A is the adjoint of the Cholesky
    # differential, so grad_P = L^-T mask(A) L^-1 (exact for the frozen
    # draws, not just in expectation).
    a = L.T @ grad_l
    mask = (np.tril(a, -1) + 0.5 * np.diag(np.diag(a))).T
    grad_cov = np.linalg.solve(L.T, np.linalg.solve(L.T, mask.T).T)
    return grad_mean, grad_cov


def gauss_newton_gradients(model: MeasurementModel, y: np.ndarray, x: np.ndarray,
                           L: np.ndarray, er: np.ndarray, eps: np.ndarray
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo mean gradient with Gauss-Newton (Fisher) curvature.

    grad_mean matches sampled_gradients; grad_cov is the sampled expected
    curvature (1/S) sum_s J_s' W J_s, which is positive semidefinite and,
    unlike the reparameterized covariance gradient, free of the
    Hessian-times-residual term.  Exact (equal to exact_linear_gradients)
    for a linear measurement function.
    """
    samples = x + eps @ L.T
    resid = wrap_residual(model, y - measure(model, samples))
    jac = measure_jacobian(model, samples)
    s = eps.shape[0]
    grad_mean = -(2.0 / s) * np.einsum("smn,sm->n", jac, resid @ er)
    grad_cov = (1.0 / s) * np.einsum("smn,mp,spq->nq", jac, er, jac)
    return grad_mean, grad_cov


def exact_linear_gradients(H: np.ndarray, y: np.ndarray, x: np.ndarray,
                           er: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form limit of sampled_gradients for a linear measurement model."""
    grad_mean = -2.0 * H.T @ er @ (y - H @ x)
    grad_cov = H.T @ er @ H
    return grad_mean, grad_cov


def compensated_precision_step(prec: np.ndarray, cov: np.ndarray,
                               target: np.ndarray, beta: float) -> np.ndarray:
    """Mirror step on the precision with a PD-preserving compensation term.

    new = 0.5 beta^2 G P G + (1 - beta) prec + beta target, G = prec - target.
    Positive definiteness holds for any symmetric target and beta in (0, 1].
    """
    g = prec - target
    step = 0.5 * beta * beta * (g @ cov @ g) + (1.0 - beta) * prec + beta * target
    return symmetrize(step)


def whitened_draws(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Standard-normal draws recentred and rescaled to exact sample moments.

    With zero mean and identity second moment, sampled expectations of
    linear and quadratic functions of the draws are exact rather than
    O(1/sqrt(S)); this removes the sampling noise floor that otherwise
    keeps the iteration from reaching a tight convergence threshold.
    """
    eps = rng.standard_normal((count, dim))
    eps = eps - eps.mean(axis=0)
    scale = cholesky_lower(eps.T @ eps / count, "sample second moment")
    return solve_lower(scale, eps.T).T


def update_nonlinear(pred: JointBelief, y: np.ndarray, model: MeasurementModel,
                     config: FilterConfig, rng: np.random.Generator,
                     gradient_fn=None) -> UpdateResult:
    """Measurement update for nonlinear models via stochastic mirror descent.

    One set of S whitened standard-normal draws is made per call and reused
    across iterations (common random numbers), so the iteration is a
    deterministic fixed-point map of the sampled objective and can actually
    reach the convergence threshold.  The precision target uses the sampled
    Gauss-Newton (Fisher) curvature E[J'E[R^-1]J]; the reparameterized
    covariance gradient additionally carries a Hessian-times-residual term
    whose correlation with a near-singular measurement weight biases the
    stationary covariance (see sampled_gradients, kept for exactness
    checks).  ``gradient_fn(y, x, L, er)`` may replace the Monte Carlo
    estimator (used for the linear-reduction check).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    n = pred.state.dim
    beta = config.learning_rate
    x_pred = pred.state.mean

    eps = whitened_draws(rng, config.sample_count, n)

    x = x_pred.copy()
    p = pred.state.covariance
    prec = spd_inverse(p, "predicted covariance")
    pred_cov, meas_noise = pred.pred_cov, pred.meas_noise
    ep = iw_expected_precision(pred_cov)
    er = iw_expected_precision(meas_noise)
    current = pred

    for r in range(1, config.max_iters + 1):
        L = cholesky_lower(p, f"state covariance (iteration {r})")
        if gradient_fn is None:
            grad_mean, grad_cov = gauss_newton_gradients(model, y, x, L, er, eps)
        else:
            grad_mean, grad_cov = gradient_fn(y, x, L, er)
        grad_cov = symmetrize(grad_cov)

        target = ep + grad_cov
        prec_new = compensated_precision_step(prec, p, target, beta)
        p_new = spd_inverse(prec_new, f"posterior precision (iteration {r})")
        x_new = x + beta * p_new @ ep @ (x_pred - x) - 0.5 * beta * p_new @ grad_mean

        # IW refreshes from the stepped state belief; their expectations
        # feed the next iteration's gradient (coordinate ascent).
        L_new = cholesky_lower(p_new, f"state covariance (iteration {r})")
        resid = wrap_residual(model, y - measure(model, x_new + eps @ L_new.T))
        a_matrix = resid.T @ resid / eps.shape[0]
        pred_cov, meas_noise = _refresh_hyperparameters(pred, x_new, p_new, a_matrix)
        ep = iw_expected_precision(pred_cov)
        er = iw_expected_precision(meas_noise)

        nxt = JointBelief(GaussianBelief(x_new, p_new), pred_cov, meas_noise)
        done = converged(current, nxt, config.conv_threshold)
        current = nxt
        x, p, prec = x_new, p_new, prec_new
        if done:
            return UpdateResult(current, r, True)
    return UpdateResult(current, config.max_iters, False)


def kf_update_known_noise(pred_mean: np.ndarray, pred_cov: np.ndarray,
                          y: np.ndarray, H: np.ndarray, R: np.ndarray
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Standard Kalman measurement update in information form."""
    pred_mean = np.asarray(pred_mean, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    H = np.asarray(H, dtype=float)
    prec_pred = spd_inverse(pred_cov, "predicted covariance")
    r_inv = spd_inverse(R, "measurement noise covariance")
    prec = symmetrize(prec_pred + H.T @ r_inv @ H)
    cov = spd_inverse(prec, "posterior precision")
    mean = cov @ (prec_pred @ pred_mean + H.T @ r_inv @ y)
    return mean, cov


def ekf_update_known_noise(pred_mean: np.ndarray, pred_cov: np.ndarray,
                           y: np.ndarray, model: MeasurementModel, R: np.ndarray
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Extended Kalman update: linearize at the predicted mean, wrap the innovation."""
    pred_mean = np.asarray(pred_mean, dtype=float).reshape(-1)
    H = measure_jacobian(model, pred_mean)
    innovation = wrap_residual(model, np.asarray(y, dtype=float) - measure(model, pred_mean))
    # gain form keeps the innovation wrap explicit
    s = symmetrize(H @ pred_cov @ H.T + R)
    gain = pred_cov @ H.T @ spd_inverse(s, "innovation covariance")
    mean = pred_mean + gain @ innovation
    cov = symmetrize((np.eye(pred_mean.size) - gain @ H) @ pred_cov)
    return mean, cov
