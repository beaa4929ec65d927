"""
Adaptive Kalman filtering with joint noise-covariance identification.

The filter maintains a Gaussian state belief alongside inverse Wishart
beliefs over the predicted state covariance and measurement noise
covariance, and refreshes all three each step by variational
optimization: closed-form coordinate ascent for linear measurement
models, stochastic mirror descent with reparameterized gradients for
nonlinear ones.
"""

from .distributions import (
    GaussianBelief,
    InverseWishartBelief,
    NotPositiveDefiniteError,
    cholesky_lower,
    gaussian_to_natural,
    iw_expected_precision,
    iw_from_natural,
    iw_to_natural,
    natural_to_gaussian,
    symmetrize,
)
from .filters import (
    FilterConfig,
    JointBelief,
    UpdateResult,
    compensated_precision_step,
    converged,
    ekf_update_known_noise,
    initial_joint_belief,
    kf_update_known_noise,
    predict,
    update_linear,
    update_nonlinear,
)
from .metrics import MetricTable, armse, position_rmse, rmse_series, velocity_rmse
from .models import (
    MeasurementModel,
    TransitionModel,
    measure,
    measure_jacobian,
    transition_apply,
    wrap_angle,
    wrap_residual,
)
from .simulator import (
    MonteCarloResult,
    Scenario,
    default_config,
    make_scenario,
    run_monte_carlo,
    scenario_noise_at,
    simulate_run,
)

__version__ = "0.1.0"
