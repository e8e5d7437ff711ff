import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emweak import SimConfig, catalog_get, make_time_grid, sigma_analyze
from emweak.engine import draw_increments
from emweak.girsanov import (
    NOVIKOV_LAMBDA,
    PURPOSE_WEIGHTS,
    PreconditionError,
    check_lambda_horizon,
    check_weak_rate_condition,
    exp_moment_estimate,
    exp_moment_samples,
    weighted_expectation,
    weighted_samples,
    weights_along_path,
    weights_batch,
)


class TestConditions:
    def test_lambda_horizon_examples(self, sigma1):
        c = check_lambda_horizon(1.0, 0.25, 1.0, sigma1)
        assert (c.lhs, c.passed, c.margin) == (0.5, True, 0.5)
        c = check_lambda_horizon(1.0, 1.0, 1.0, sigma1)
        assert c.lhs == 2.0 and not c.passed
        c = check_lambda_horizon(5.0, 1.0, 0.0, sigma1)
        assert c.passed and c.margin == 1.0

    def test_lambda_horizon_sigma_condition_number(self):
        sig = sigma_analyze(np.diag([2.0, 0.5]))  # ||s|| ||s^-1|| = 4
        c = check_lambda_horizon(0.5, 0.5, 1.0, sig)
        assert c.lhs == pytest.approx(2 * 0.25 * 0.5 * 16)

    def test_weak_rate_max_horizon(self, sigma1):
        c = check_weak_rate_condition(0.1, 1.0, sigma1, 2.0)
        assert abs(c.max_horizon - 1 / math.sqrt(30)) < 1e-12
        assert c.lhs == pytest.approx(0.1 * math.sqrt(30), rel=1e-14)

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_pass_iff_below_max_horizon(self, T):
        c = check_weak_rate_condition(T, 1.0, sigma_analyze([[1.0]]), 2.0)
        assert c.passed == (T < c.max_horizon) or math.isclose(T, c.max_horizon, rel_tol=1e-14)

    def test_margin_monotone(self, sigma1):
        Ts = np.linspace(0, 1, 50)
        m = [check_weak_rate_condition(T, 1.0, sigma1, 2.0).margin for T in Ts]
        assert np.all(np.diff(m) < 0)
        p = [check_weak_rate_condition(0.1, 1.0, sigma1, p0).margin for p0 in (2, 3, 5, 10)]
        assert np.all(np.diff(p) > 0)  # larger p0 relaxes the constant

    def test_bounded_drift_has_no_horizon(self, sigma1):
        c = check_weak_rate_condition(100.0, catalog_get("svc").effective_l2, sigma1, 2.0)
        assert c.passed and math.isinf(c.max_horizon)

    def test_invalid_p0(self, sigma1):
        with pytest.raises(ValueError):
            check_weak_rate_condition(0.1, 1.0, sigma1, 1.5)


class TestWeights:
    def test_zero_drift_weight_is_one(self, sigma1):
        g = make_time_grid(1.0, 0.125)
        inc = np.random.default_rng(0).standard_normal((8, 1)) * math.sqrt(0.125)
        w = weights_along_path(catalog_get("zero"), sigma1, 0.0, g, inc)
        assert w.log_weight == 0.0 and w.weight == 1.0

    def test_constant_drift_closed_form(self, sigma1):
        # R = exp(a W_T - a^2 T / 2)
        a = 0.7
        g = make_time_grid(2.0, 0.25)
        inc = np.random.default_rng(1).standard_normal((8, 1)) * 0.5
        w = weights_along_path(catalog_get("linear", a=a, lam=0.0), sigma1, 0.3, g, inc)
        assert w.log_weight == pytest.approx(a * inc.sum() - a * a * 2.0 / 2, rel=1e-13)

    def test_sigma_scaling(self):
        a, s = 0.7, 2.0
        sig = sigma_analyze([[s]])
        g = make_time_grid(1.0, 0.25)
        inc = np.random.default_rng(2).standard_normal((4, 1)) * 0.5
        w = weights_along_path(catalog_get("linear", a=a, lam=0.0), sig, 0.0, g, inc)
        assert w.log_weight == pytest.approx((a / s) * inc.sum() - (a / s) ** 2 / 2, rel=1e-13)

    def test_r1_equals_r2_when_delta_is_fine_step(self, sigma1):
        drift = catalog_get("svc")
        g = make_time_grid(0.5, 1 / 64)
        inc = draw_increments(3, range(200), g, 1, PURPOSE_WEIGHTS)
        x0 = np.array([0.5])
        r1 = weights_batch(drift, sigma1, x0, g, inc, "R1")
        r2 = weights_batch(drift, sigma1, x0, g, inc, "R2", delta=1 / 64)
        for a, b in zip(r1, r2):
            np.testing.assert_array_equal(a, b)

    def test_r2_freezes_on_coarse_grid(self, sigma1):
        drift = catalog_get("linear", a=0.0, lam=1.0)
        fine = make_time_grid(1.0, 0.125)
        coarse = make_time_grid(1.0, 0.5)
        inc = np.random.default_rng(4).standard_normal((1, 8, 1)) * math.sqrt(0.125)
        x0 = np.array([1.0])
        ito_f, quad_f, _ = weights_batch(drift, sigma1, x0, fine, inc, "R2", delta=0.5)
        ito_c, quad_c, _ = weights_batch(drift, sigma1, x0, coarse, inc.reshape(1, 2, 4, 1).sum(axis=2))
        assert ito_f[0] == pytest.approx(ito_c[0], rel=1e-12)
        assert quad_f[0] == pytest.approx(quad_c[0], rel=1e-12)

    def test_unknown_variant(self, sigma1):
        g = make_time_grid(1.0, 0.5)
        with pytest.raises(ValueError):
            weights_batch(catalog_get("svc"), sigma1, np.zeros(1), g, np.zeros((1, 2, 1)), "R3", 0.25)

    def test_mean_weight_is_one(self, sigma1):
        cfg = SimConfig(1.0, 1 / 32, (0.0,), 20_000, 5)
        w, _ = weighted_samples(catalog_get("linear", a=0.8, lam=0.0), sigma1, cfg, lambda y: y[:, 0], "R2")
        assert abs(w.mean() - 1) < 3 * w.std() / math.sqrt(w.size)


class TestWeightedExpectation:
    def test_ou_continuous_law(self, sigma1):
        # E X_T = x0 e^{-T} for dX = -X dt + dW
        T = 0.15
        cfg = SimConfig(T, T / 4, (1.0,), 40_000, 8)
        est = weighted_expectation(catalog_get("linear", a=0.0, lam=1.0), sigma1, cfg,
                                   lambda y: y[:, 0], "R1", fine_step=T / 256)
        assert abs(est.value - math.exp(-T)) < 3 * est.stderr

    def test_r2_reproduces_em_law(self, sigma1):
        T = 0.15
        cfg = SimConfig(T, T / 4, (1.0,), 40_000, 9)
        est = weighted_expectation(catalog_get("linear", a=0.0, lam=1.0), sigma1, cfg,
                                   lambda y: y[:, 0], "R2")
        assert abs(est.value - (1 - T / 4) ** 4) < 3 * est.stderr

    def test_precondition(self, sigma1):
        cfg = SimConfig(2.0, 0.5, (1.0,), 10, 0)
        with pytest.raises(PreconditionError):
            weighted_expectation(catalog_get("linear", a=0.0, lam=1.0), sigma1, cfg, lambda y: y[:, 0])

    def test_novikov_lambda(self):
        assert NOVIKOV_LAMBDA == pytest.approx(0.525)


class TestExpMoments:
    def test_envelope_pathwise(self, sigma1):
        lam, T = 1.0, 1.0
        cfg = SimConfig(T, T / 256, (0.5,), 4000, 0)
        s = exp_moment_samples(catalog_get("svc"), sigma1, (0.5,), T, lam, cfg)
        assert np.all(s <= math.exp(lam * T) * (1 + 1e-12))
        assert np.all(s >= 1.0)

    def test_zero_drift(self, sigma1):
        cfg = SimConfig(1.0, 0.25, (0.0,), 100, 0)
        rep = exp_moment_estimate(catalog_get("zero"), sigma1, (0.0,), 1.0, 0.5, cfg)
        assert rep.estimate == 1.0 and rep.stderr == 0.0
        rep = exp_moment_estimate(catalog_get("svc"), sigma1, (0.0,), 1.0, 0.0, cfg)
        assert rep.estimate == 1.0

    def test_constant_drift_exact(self, sigma1):
        # exp(lam * a^2 * T) with no randomness
        cfg = SimConfig(1.0, 0.25, (0.0,), 50, 0)
        rep = exp_moment_estimate(catalog_get("linear", a=0.5, lam=0.0), sigma1, (0.0,), 1.0, 2.0, cfg)
        assert rep.estimate == pytest.approx(math.exp(2.0 * 0.25), rel=1e-12)
        assert not rep.heavy_tail

    def test_ou_finite_below_horizon(self, sigma1):
        cfg = SimConfig(0.5, 1 / 64, (0.0,), 5000, 1)
        rep = exp_moment_estimate(catalog_get("linear", a=0.0, lam=1.0), sigma1, (0.0,), 0.5, 0.5, cfg)
        assert math.isfinite(rep.estimate) and rep.estimate > 1.0 and rep.n_nonfinite == 0
