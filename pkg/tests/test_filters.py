import numpy as np
import pytest

from cviakf.distributions import (
    GaussianBelief,
    InverseWishartBelief,
    NotPositiveDefiniteError,
    cholesky_lower,
    iw_expected_precision,
    symmetrize,
)
from cviakf.filters import (
    FilterConfig,
    JointBelief,
    compensated_precision_step,
    converged,
    ekf_update_known_noise,
    exact_linear_gradients,
    gauss_newton_gradients,
    initial_joint_belief,
    kf_update_known_noise,
    predict,
    sampled_gradients,
    update_linear,
    update_nonlinear,
    whitened_draws,
)
from cviakf.models import H_POSITION, measure
from cviakf.simulator import default_config, make_scenario


def random_spd(rng, n, jitter=1e-3):
    w = rng.normal(size=(n, n))
    return w @ w.T + jitter * np.eye(n)


def linear_config(**overrides):
    return default_config(make_scenario("s1"), **overrides)


def random_linear_pred(rng, config):
    mean = rng.normal(scale=100.0, size=4)
    cov = random_spd(rng, 4, jitter=1.0) * 10.0
    pred_cov = InverseWishartBelief(4 + config.tau_p + 1.0, config.tau_p * cov)
    meas_noise = InverseWishartBelief(
        config.tau_r + 2 + 1.0, config.tau_r * random_spd(rng, 2, jitter=1.0) * 50.0)
    return JointBelief(GaussianBelief(mean, cov), pred_cov, meas_noise)


# ---------------------------------------------------------------- prediction

def test_predict_moments_and_hyperparameters():
    config = linear_config()
    scenario = make_scenario("s1")
    rng = np.random.default_rng(0)
    belief = initial_joint_belief(rng.normal(size=4), random_spd(rng, 4, 1.0), config)
    pred = predict(belief, scenario.transition, config)
    F = scenario.transition.transition_matrix
    np.testing.assert_allclose(pred.state.mean, F @ belief.state.mean)
    p_pred = F @ belief.state.covariance @ F.T + config.nominal_q
    np.testing.assert_allclose(pred.state.covariance, symmetrize(p_pred))
    # predicted-covariance belief recentred on the new prediction
    assert pred.pred_cov.dof == pytest.approx(4 + config.tau_p + 1.0)
    np.testing.assert_allclose(pred.pred_cov.scale, config.tau_p * symmetrize(p_pred))
    np.testing.assert_allclose(iw_expected_precision(pred.pred_cov),
                               np.linalg.inv(symmetrize(p_pred)), rtol=1e-8)
    # measurement-noise belief decays with the forgetting factor
    rho = config.rho_r
    m = 2
    assert pred.meas_noise.dof == pytest.approx(
        rho * (belief.meas_noise.dof - m - 1.0) + m + 1.0)
    np.testing.assert_allclose(pred.meas_noise.scale, rho * belief.meas_noise.scale)
    # forgetting preserves the expected noise covariance
    np.testing.assert_allclose(iw_expected_precision(pred.meas_noise),
                               iw_expected_precision(belief.meas_noise), rtol=1e-9)


# ------------------------------------------------------- linear update cycle

def test_pinned_update_is_information_filter():
    """With pinned expectations the update collapses to a Kalman step."""
    config = linear_config()
    rng = np.random.default_rng(1)
    for _ in range(200):
        pred = random_linear_pred(rng, config)
        y = rng.normal(scale=100.0, size=2)
        p_pred = pred.state.covariance
        r = np.linalg.inv(iw_expected_precision(pred.meas_noise))
        pinned = (np.linalg.inv(p_pred), np.linalg.inv(r))
        result = update_linear(pred, y, H_POSITION, config,
                               pinned_expectations=pinned)
        mean_kf, cov_kf = kf_update_known_noise(pred.state.mean, p_pred, y,
                                                H_POSITION, r)
        np.testing.assert_allclose(result.belief.state.mean, mean_kf,
                                   rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(result.belief.state.covariance, cov_kf,
                                   rtol=1e-10, atol=1e-12)


def test_converged_update_is_stationary():
    """At convergence P^-1 - E[P_pred^-1] - H' E[R^-1] H vanishes."""
    config = linear_config()
    rng = np.random.default_rng(2)
    for _ in range(20):
        pred = random_linear_pred(rng, config)
        y = rng.normal(scale=100.0, size=2)
        result = update_linear(pred, y, H_POSITION, config)
        assert result.converged
        belief = result.belief
        prec = np.linalg.inv(belief.state.covariance)
        gap = prec - iw_expected_precision(belief.pred_cov) \
            - H_POSITION.T @ iw_expected_precision(belief.meas_noise) @ H_POSITION
        assert np.linalg.norm(gap) < 10 * config.conv_threshold * np.linalg.norm(prec)


def test_hyperparameter_increments_single_step():
    config = linear_config()
    rng = np.random.default_rng(3)
    pred = random_linear_pred(rng, config)
    result = update_linear(pred, rng.normal(scale=100, size=2), H_POSITION, config)
    assert result.belief.pred_cov.dof == pytest.approx(pred.pred_cov.dof + 1.0)
    assert result.belief.meas_noise.dof == pytest.approx(pred.meas_noise.dof + 1.0)


def test_converged_is_relative_mean_test():
    b1 = JointBelief(GaussianBelief(np.zeros(2), np.eye(2)),
                     InverseWishartBelief(6.0, np.eye(2)),
                     InverseWishartBelief(6.0, np.eye(2)))
    b2 = JointBelief(GaussianBelief(np.full(2, 1e-9), np.eye(2)),
                     b1.pred_cov, b1.meas_noise)
    assert converged(b1, b2, 1e-7)
    b3 = JointBelief(GaussianBelief(np.full(2, 1e-3), np.eye(2)),
                     b1.pred_cov, b1.meas_noise)
    assert not converged(b1, b3, 1e-7)


# ------------------------------------------------------------ gradient steps

def test_compensated_step_scalar_example():
    # prec 1, target -0.5, beta 1: G = 1.5, result 0.5*1.5^2 - 0.5 = 0.625
    out = compensated_precision_step(np.array([[1.0]]), np.array([[1.0]]),
                                     np.array([[-0.5]]), 1.0)
    np.testing.assert_allclose(out, [[0.625]])
    # the uncompensated step 0*prec + 1*target would be negative
    assert out[0, 0] > 0


def test_compensated_step_stationary_at_target():
    rng = np.random.default_rng(4)
    prec = random_spd(rng, 3)
    out = compensated_precision_step(prec, np.linalg.inv(prec), prec, 0.4)
    np.testing.assert_allclose(out, prec, rtol=1e-9, atol=1e-12)


def test_compensated_step_pd_fuzz():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(2, 6))
        prec = random_spd(rng, n)
        cov = np.linalg.inv(prec)
        target = symmetrize(rng.normal(scale=float(rng.uniform(0.1, 10.0)),
                                       size=(n, n)))
        beta = float(rng.uniform(1e-3, 1.0))
        stepped = compensated_precision_step(prec, cov, target, beta)
        cholesky_lower(stepped, "stepped precision")  # raises on failure


def test_whitened_draws_moments():
    rng = np.random.default_rng(6)
    eps = whitened_draws(rng, 500, 4)
    np.testing.assert_allclose(eps.mean(axis=0), np.zeros(4), atol=1e-12)
    np.testing.assert_allclose(eps.T @ eps / 500, np.eye(4), atol=1e-10)


def test_sampled_gradients_linear_limit():
    """Whitened draws make the mean gradient exact for a linear model."""
    model = make_scenario("s1").measurement
    rng = np.random.default_rng(7)
    x = rng.normal(scale=50, size=4)
    p = random_spd(rng, 4, 1.0)
    L = cholesky_lower(p, "p")
    er = np.linalg.inv(random_spd(rng, 2, 1.0) * 20)
    y = rng.normal(scale=50, size=2)
    eps = whitened_draws(rng, 200, 4)
    gm, _ = sampled_gradients(model, y, x, L, er, eps)
    egm, egc = exact_linear_gradients(H_POSITION, y, x, er)
    np.testing.assert_allclose(gm, egm, rtol=1e-9, atol=1e-9)
    gm2, gc2 = gauss_newton_gradients(model, y, x, L, er, eps)
    np.testing.assert_allclose(gm2, egm, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(symmetrize(gc2), egc, rtol=1e-9, atol=1e-12)


def test_sampled_gradient_matches_finite_differences():
    """Reparameterized gradients are exact derivatives of the sampled
    objective (frozen draws), checked against central differences."""
    from cviakf.models import wrap_residual

    model = make_scenario("s3").measurement
    er = np.linalg.inv(model.nominal_r)
    rng = np.random.default_rng(8)
    for _ in range(10):
        x = np.array([5e5, -100.0, 5e5, -100.0]) + rng.normal(scale=1000, size=4)
        p = np.diag([5e3, 100.0, 5e3, 100.0]) + random_spd(rng, 4, 0.0) * 0.1
        L = cholesky_lower(p, "p")
        y = measure(model, x) + rng.normal(size=2) * np.array([10.0, 1e-3])
        eps = whitened_draws(rng, 300, 4)
        gm, gc = sampled_gradients(model, y, x, L, er, eps)
        gc = symmetrize(gc)

        def objective(pm, xm):
            lm = cholesky_lower(pm, "perturbed")
            resid = wrap_residual(model, y - measure(model, xm + eps @ lm.T))
            return float(np.mean(np.einsum("sm,mp,sp->s", resid, er, resid)))

        gm_scale = np.abs(gm).max()
        gc_scale = np.abs(np.diag(gc)).max()
        for i in range(4):
            t = 1e-6 * (1 + abs(x[i]))
            e = np.zeros(4)
            e[i] = t
            fd = (objective(p, x + e) - objective(p, x - e)) / (2 * t)
            assert abs(fd - gm[i]) / max(abs(fd), gm_scale) < 1e-5
            tp = 1e-5 * (1 + p[i, i])
            dp = np.zeros((4, 4))
            dp[i, i] = tp
            fd = (objective(p + dp, x) - objective(p - dp, x)) / (2 * tp)
            assert abs(fd - gc[i, i]) / max(abs(fd), gc_scale) < 1e-5


# --------------------------------------------------------- nonlinear update

def test_nonlinear_reduces_to_linear_on_linear_model():
    """With the exact-expectation gradient and beta=1 the sampled update
    reproduces the closed-form linear state step."""
    scenario = make_scenario("s1")
    config = default_config(scenario, learning_rate=1.0, max_iters=500,
                            conv_threshold=1e-13)
    rng = np.random.default_rng(9)
    for _ in range(10):
        pred = random_linear_pred(rng, config)
        y = rng.normal(scale=100.0, size=2)

        def exact(y_, x_, L_, er_):
            return exact_linear_gradients(H_POSITION, y_, x_, er_)

        res_nl = update_nonlinear(pred, y, scenario.measurement, config,
                                  np.random.default_rng(0), gradient_fn=exact)
        res_lin = update_linear(pred, y, H_POSITION, config)
        np.testing.assert_allclose(res_nl.belief.state.mean,
                                   res_lin.belief.state.mean, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(res_nl.belief.state.covariance,
                                   res_lin.belief.state.covariance,
                                   rtol=1e-7, atol=1e-8)


def test_nonlinear_update_returns_spd_and_increments():
    scenario = make_scenario("s3")
    config = default_config(scenario, sample_count=100)
    rng = np.random.default_rng(10)
    belief = initial_joint_belief(scenario.x0.copy(), scenario.p0, config)
    pred = predict(belief, scenario.transition, config)
    y = measure(scenario.measurement, scenario.x0) + np.array([5.0, 1e-4])
    result = update_nonlinear(pred, y, scenario.measurement, config, rng)
    cholesky_lower(result.belief.state.covariance, "posterior covariance")
    assert result.belief.pred_cov.dof == pytest.approx(pred.pred_cov.dof + 1.0)
    assert result.belief.meas_noise.dof == pytest.approx(pred.meas_noise.dof + 1.0)
    assert 1 <= result.iterations <= config.max_iters


# ------------------------------------------------------------- known-noise

def test_kf_update_known_noise_against_gain_form():
    rng = np.random.default_rng(11)
    for _ in range(50):
        mean = rng.normal(scale=10, size=4)
        cov = random_spd(rng, 4, 1.0)
        r = random_spd(rng, 2, 1.0)
        y = rng.normal(scale=10, size=2)
        m_info, c_info = kf_update_known_noise(mean, cov, y, H_POSITION, r)
        s = H_POSITION @ cov @ H_POSITION.T + r
        gain = cov @ H_POSITION.T @ np.linalg.inv(s)
        m_gain = mean + gain @ (y - H_POSITION @ mean)
        c_gain = (np.eye(4) - gain @ H_POSITION) @ cov
        np.testing.assert_allclose(m_info, m_gain, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(c_info, c_gain, rtol=1e-8, atol=1e-9)


def test_ekf_update_linearizes_at_prediction():
    scenario = make_scenario("s3")
    model = scenario.measurement
    x = np.array([3e5, -100.0, 4e5, -100.0])
    cov = np.diag([1e4, 100.0, 1e4, 100.0])
    y = measure(model, x)  # zero innovation
    mean, out_cov = ekf_update_known_noise(x, cov, y, model, model.nominal_r)
    np.testing.assert_allclose(mean, x, rtol=1e-12)
    cholesky_lower(out_cov, "ekf posterior")


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(np.eye(4), np.eye(2), rho_r=1.5)
    with pytest.raises(ValueError):
        FilterConfig(np.eye(4), np.eye(2), learning_rate=0.0)
    with pytest.raises(ValueError):
        FilterConfig(np.eye(4), np.eye(2), tau_p=-1.0)
