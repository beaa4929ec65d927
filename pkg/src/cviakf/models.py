"""
State-space model descriptors for 2D target tracking.

The transition model is a nearly-constant-velocity (CV) kinematic model
over the state [x, vx, y, vy].  Two measurement models are built in: a
linear position sensor returning [x, y] and a range-azimuth sensor
returning [sqrt(x^2+y^2), atan2(y, x)].

Descriptors are stateless and immutable; all operations are pure and
accept batched states with shape (..., 4).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 4
POS_IDX = (0, 2)
VEL_IDX = (1, 3)

LINEAR_POSITION = "linear-position"
RANGE_AZIMUTH = "range-azimuth"

# Selector picking (x, y) out of [x, vx, y, vy]
H_POSITION = np.array([[1.0, 0.0, 0.0, 0.0],
                       [0.0, 0.0, 1.0, 0.0]])


def cv_transition_matrix(period: float) -> np.ndarray:
    """Block-diagonal CV transition: I2 kron [[1, T], [0, 1]]."""
    return np.kron(np.eye(2), np.array([[1.0, period], [0.0, 1.0]]))


def cv_process_noise_template(period: float) -> np.ndarray:
    """White-acceleration CV noise shape: I2 kron [[T^3/3, T^2/2], [T^2/2, T]]."""
    t = period
    block = np.array([[t ** 3 / 3.0, t ** 2 / 2.0], [t ** 2 / 2.0, t]])
    return np.kron(np.eye(2), block)


@dataclass(frozen=True)
class TransitionModel:
    """Linear CV transition with sampling period T."""

    period: float
    kind: str = "linear-CV"
    transition_matrix: np.ndarray = field(init=False)
    nominal_q: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")
        object.__setattr__(self, "transition_matrix", cv_transition_matrix(self.period))
        object.__setattr__(self, "nominal_q", cv_process_noise_template(self.period))


@dataclass(frozen=True)
class MeasurementModel:
    """Measurement model descriptor: linear position or range-azimuth."""

    kind: str
    nominal_r: np.ndarray

    def __post_init__(self):
        if self.kind not in (LINEAR_POSITION, RANGE_AZIMUTH):
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        r = np.asarray(self.nominal_r, dtype=float)
        if r.shape != (2, 2):
            raise ValueError(f"nominal_r must be 2x2, got shape {r.shape}")
        object.__setattr__(self, "nominal_r", r)

    @property
    def measurement_dim(self) -> int:
        return 2

    @property
    def is_linear(self) -> bool:
        return self.kind == LINEAR_POSITION


def transition_apply(model: TransitionModel, state: np.ndarray) -> np.ndarray:
    """Propagate state(s) through the CV transition."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != STATE_DIM:
        raise ValueError(f"state must have trailing dimension {STATE_DIM}, got {state.shape}")
    return state @ model.transition_matrix.T


def wrap_angle(a):
    """Map angle(s) into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def measure(model: MeasurementModel, state: np.ndarray) -> np.ndarray:
    """Apply the measurement function to state(s) of shape (..., 4)."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != STATE_DIM:
        raise ValueError(f"state must have trailing dimension {STATE_DIM}, got {state.shape}")
    if model.is_linear:
        return state @ H_POSITION.T
    x = state[..., 0]
    y = state[..., 2]
    r = np.hypot(x, y)
    if np.any(r == 0.0):
        raise ValueError("range-azimuth measurement undefined at the origin (x=y=0)")
    a = wrap_angle(np.arctan2(y, x))
    return np.stack([r, a], axis=-1)


def measure_jacobian(model: MeasurementModel, state: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of the measurement function, shape (..., 2, 4)."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != STATE_DIM:
        raise ValueError(f"state must have trailing dimension {STATE_DIM}, got {state.shape}")
    if model.is_linear:
        return np.broadcast_to(H_POSITION, state.shape[:-1] + (2, STATE_DIM)).copy()
    x = state[..., 0]
    y = state[..., 2]
    r2 = x * x + y * y
    if np.any(r2 == 0.0):
        raise ValueError("range-azimuth Jacobian singular at the origin (x=y=0)")
    r = np.sqrt(r2)
    jac = np.zeros(state.shape[:-1] + (2, STATE_DIM))
    jac[..., 0, 0] = x / r
    jac[..., 0, 2] = y / r
    jac[..., 1, 0] = -y / r2
    jac[..., 1, 2] = x / r2
    return jac


def wrap_residual(model: MeasurementModel, residual: np.ndarray) -> np.ndarray:
    """Wrap the azimuth component of measurement residual(s) into (-pi, pi].

    The linear model is a pure pass-through; the range component is never
    touched.
    """
    residual = np.asarray(residual, dtype=float)
    if residual.shape[-1] != model.measurement_dim:
        raise ValueError(
            f"residual must have trailing dimension {model.measurement_dim}, got {residual.shape}"
        )
    if model.is_linear:
        return residual
    out = residual.copy()
    out[..., 1] = wrap_angle(out[..., 1])
    return out


def finite_difference_jacobian(model: MeasurementModel, state: np.ndarray,
                               step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian fallback, step scaled by state magnitude."""
    state = np.asarray(state, dtype=float).reshape(-1)
    h = step * (1.0 + np.abs(state))
    jac = np.zeros((model.measurement_dim, state.size))
    for j in range(state.size):
        hi = state.copy()
        lo = state.copy()
        hi[j] += h[j]
        lo[j] -= h[j]
        diff = wrap_residual(model, measure(model, hi) - measure(model, lo))
        jac[:, j] = diff / (2.0 * h[j])
    return jac
