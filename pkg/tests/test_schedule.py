"""Tests for the noise schedules."""

import numpy as np
import pandas as pd
import pytest

from diffusion import (build_cosine, build_linear, build_quadratic, build_schedule, posterior_coeffs,
                       transition_coeffs)
from diffusion.schedule import _from_betas
from utils.exceptions import ConfigurationError


@pytest.fixture(params=['cosine', 'linear', 'quadratic'])
def schedule(request):
    return build_schedule(request.param, 100)


class TestScheduleTables:

    def test_alpha_bar_is_cumulative_product(self, schedule):
        np.testing.assert_allclose(schedule.alpha_bars[1:], np.cumprod(1.0 - schedule.betas), rtol=1e-14)
        assert schedule.alpha_bars[0] == 1.0

    def test_monotone_and_bounded(self, schedule):
        assert np.all(np.diff(schedule.alpha_bars) < 0)
        assert np.all(schedule.betas > 0) and np.all(schedule.betas <= 0.999)

    def test_posterior_std_zero_at_first_step(self, schedule):
        assert schedule.sigma(1) == 0.0
        assert schedule.sigma(0) == 0.0

    def test_tables_are_read_only(self, schedule):
        with pytest.raises(ValueError):
            schedule.betas[0] = 0.5

    def test_accessor_range(self, schedule):
        with pytest.raises(ValueError):
            schedule.beta(0)
        with pytest.raises(ValueError):
            schedule.alpha_bar(schedule.K + 1)


class TestCosine:

    def test_offset_recorded_and_clipped(self):
        sched = build_cosine(100, s=5.0)
        assert sched.offset == 5.0
        assert sched.betas.max() <= 0.999

    def test_final_alpha_bar_near_zero(self):
        assert build_cosine(100).alpha_bar(100) < 1e-3

    def test_large_offset_keeps_early_steps_noisy(self):
        # with s=5 the first step already destroys more signal than with s≈0
        assert build_cosine(100, s=5.0).beta(1) > build_cosine(100, s=0.008).beta(1)

    def test_invalid_arguments(self):
        with pytest.raises(ConfigurationError):
            build_cosine(0)
        with pytest.raises(ConfigurationError):
            build_linear(10, beta_min=0.1, beta_max=0.01)
        with pytest.raises(ConfigurationError):
            build_schedule('sigmoid', 10)


class TestPosterior:

    def test_coefficients_match_formula(self):
        sched = build_linear(50)
        k = 17
        c_x0, c_xk, sigma = posterior_coeffs(sched, k)
        bar_k, bar_prev, beta = sched.alpha_bar(k), sched.alpha_bar(k - 1), sched.beta(k)
        assert c_x0 == pytest.approx(np.sqrt(bar_prev) * beta / (1 - bar_k), rel=1e-14)
        assert c_xk == pytest.approx(np.sqrt(1 - beta) * (1 - bar_prev) / (1 - bar_k), rel=1e-14)
        assert sigma ** 2 == pytest.approx((1 - bar_prev) / (1 - bar_k) * beta, rel=1e-12)

    def test_first_step_returns_prediction(self):
        c_x0, c_xk, sigma = posterior_coeffs(build_quadratic(10), 1)
        assert c_x0 == pytest.approx(1.0, rel=1e-14)
        assert c_xk == 0.0 and sigma == 0.0

    def test_transition_reduces_to_posterior(self):
        sched = build_cosine(30)
        assert transition_coeffs(sched, 12, 11) == posterior_coeffs(sched, 12)

    def test_transition_to_zero_is_prediction(self):
        c_x0, c_xk, sigma = transition_coeffs(build_cosine(30), 20, 0)
        assert c_x0 == pytest.approx(1.0, rel=1e-12)
        assert c_xk == pytest.approx(0.0, abs=1e-15)
        assert sigma == pytest.approx(0.0, abs=1e-15)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            posterior_coeffs(build_linear(10), 11)
        with pytest.raises(ValueError):
            transition_coeffs(build_linear(10), 3, 3)


class TestScheduleExport:

    def test_csv_columns(self, tmp_path):
        path = tmp_path / 'schedule.csv'
        sched = build_cosine(20)
        sched.to_csv(path)
        frame = pd.read_csv(path, float_precision='round_trip')
        assert list(frame.columns) == ['k', 'beta', 'alpha_bar', 'sigma']
        assert len(frame) == 20
        np.testing.assert_allclose(frame['alpha_bar'].to_numpy(), sched.alpha_bars[1:], rtol=1e-15)


class TestWorkedValues:

    def test_cosine_first_alpha_bar(self):
        def f(t):
            return np.cos((t / 100 + 5.0) / 6.0 * np.pi / 2) ** 2

        assert build_cosine(100, s=5.0).alpha_bar(1) == pytest.approx(f(1) / f(0), rel=1e-12)
        assert build_cosine(100, s=5.0).alpha_bar(1) == pytest.approx(0.98055, abs=1e-5)

    def test_linear_betas(self):
        np.testing.assert_allclose(build_linear(3, 0.1, 0.3).betas, [0.1, 0.2, 0.3], rtol=1e-14)

    def test_quadratic_betas(self):
        np.testing.assert_allclose(build_quadratic(2, 0.01, 0.04).betas, [0.01, 0.04], rtol=1e-14)

    def test_single_step_linear(self):
        np.testing.assert_array_equal(build_linear(1, 0.05, 0.2).betas, [0.05])

    def test_posterior_example(self):
        c_x0, c_xk, _ = posterior_coeffs(_from_betas('fixed', np.array([0.1, 0.2])), 2)
        assert c_x0 == pytest.approx(0.6776, abs=1e-4)
        assert c_xk == pytest.approx(0.3194, abs=1e-4)
