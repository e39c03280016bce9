"""Tests for the point and probabilistic metrics against loop oracles."""

import numpy as np
import pytest

from config import MoMConfig
from evaluation import (EvalReport, crps, crps_grid, crps_sum, evaluate_samples, mae, mse, normalized_crps,
                        sample_variance)
from utils.exceptions import NumericalError, ShapeError


def crps_loop(draws, y):
    n = len(draws)
    skill = sum(abs(x - y) for x in draws) / n
    spread = sum(abs(a - b) for a in draws for b in draws) / (2 * n * n)
    return skill - spread


class TestPointMetrics:

    def test_perfect(self):
        y = np.random.default_rng(0).standard_normal((4, 3))
        assert mse(y, y) == 0.0 and mae(y, y) == 0.0

    def test_constant_error(self):
        y = np.zeros((5, 2))
        assert mse(y + 2.0, y) == 4.0
        assert mae(y + 2.0, y) == 2.0

    def test_loop_oracle(self):
        rng = np.random.default_rng(1)
        pred, truth = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
        cells = [(p, t) for p, t in zip(pred.ravel(), truth.ravel())]
        assert mse(pred, truth) == pytest.approx(sum((p - t) ** 2 for p, t in cells) / len(cells), rel=1e-12)
        assert mae(pred, truth) == pytest.approx(sum(abs(p - t) for p, t in cells) / len(cells), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError, match='mse'):
            mse(np.zeros(3), np.zeros(4))


class TestCrps:

    def test_hand_example(self):
        assert crps(np.array([0.0, 2.0]), 1.0) == pytest.approx(0.5, abs=1e-15)

    def test_deterministic_forecast_is_absolute_error(self):
        samples = np.full((5, 3), 1.7)
        truth = np.array([0.2, 1.7, -4.0])
        np.testing.assert_allclose(crps_grid(samples, truth), np.abs(1.7 - truth), rtol=1e-14, atol=0)

    def test_loop_oracle(self):
        rng = np.random.default_rng(2)
        for n in (1, 2, 7, 30):
            draws, y = rng.standard_normal(n), float(rng.standard_normal())
            assert crps(draws, y) == pytest.approx(crps_loop(draws, y), rel=1e-10, abs=1e-12)

    def test_nonnegative_fuzz(self):
        rng = np.random.default_rng(3)
        samples = rng.standard_normal((8, 10_000)) * rng.uniform(0.0, 3.0, 10_000)
        truth = rng.standard_normal(10_000) * 2
        assert np.all(crps_grid(samples, truth) >= 0.0)

    def test_no_samples(self):
        with pytest.raises(ShapeError):
            crps_grid(np.empty((0, 3)), np.zeros(3))

    def test_normalized_oracle(self):
        rng = np.random.default_rng(4)
        samples, truth = rng.standard_normal((6, 4, 2)), rng.standard_normal((4, 2))
        total = sum(crps_loop(samples[:, h, m], truth[h, m]) for h in range(4) for m in range(2))
        assert normalized_crps(samples, truth) == pytest.approx(total / np.abs(truth).sum(), rel=1e-10)

    def test_zero_target(self):
        assert normalized_crps(np.zeros((3, 2, 1)), np.zeros((2, 1))) == 0.0
        with pytest.raises(NumericalError):
            normalized_crps(np.ones((3, 2, 1)), np.zeros((2, 1)))


class TestCrpsSum:

    def test_single_channel_reduces_to_normalized(self):
        rng = np.random.default_rng(5)
        samples, truth = rng.standard_normal((9, 5, 1)), rng.standard_normal((5, 1))
        assert crps_sum(samples, truth) == pytest.approx(normalized_crps(samples, truth), rel=1e-12)

    def test_perfect_deterministic(self):
        truth = np.random.default_rng(6).standard_normal((4, 3))
        assert crps_sum(np.repeat(truth[None], 5, axis=0), truth) == 0.0

    def test_loop_oracle(self):
        rng = np.random.default_rng(7)
        samples, truth = rng.standard_normal((5, 3, 4)), rng.standard_normal((3, 4))
        numerator, denominator = 0.0, 0.0
        for h in range(3):
            draws = [samples[i, h, :].sum() for i in range(5)]
            y = truth[h, :].sum()
            numerator += crps_loop(draws, y)
            denominator += abs(y)
        assert crps_sum(samples, truth) == pytest.approx(numerator / denominator, rel=1e-10, abs=1e-12)

    def test_window_axis(self):
        rng = np.random.default_rng(8)
        samples, truth = rng.standard_normal((2, 6, 3, 2)), rng.standard_normal((2, 3, 2))
        stacked = crps_sum(np.swapaxes(samples, 0, 1).reshape(6, 6, 2), truth.reshape(6, 2))
        assert crps_sum(samples, truth) == pytest.approx(stacked, rel=1e-12)


class TestEvaluateSamples:

    @pytest.fixture
    def draws(self):
        rng = np.random.default_rng(9)
        truth = rng.standard_normal((3, 4, 2))
        samples = truth[:, None] + 0.3 * rng.standard_normal((3, 10, 4, 2))
        return samples, truth

    def test_report_fields(self, draws):
        samples, truth = draws
        report = evaluate_samples(samples, truth, MoMConfig(n_groups=5, n_repeats=2), origins=[10, 20, 30])
        frame = report.to_frame()
        assert list(frame.columns) == ['MSE', 'MSE_E', 'MSE_mean', 'MAE', 'CRPS', 'CRPS_sum', 'Var',
                                       'n_windows', 'n_draws']
        assert report.n_windows == 3 and report.n_draws == 10
        assert report.per_window['origin'].tolist() == [10, 20, 30]
        assert 'MSE_E' in report.summary()

    def test_scores_match_metric_functions(self, draws):
        samples, truth = draws
        report = evaluate_samples(samples, truth, MoMConfig(n_groups=5, n_repeats=2), single_index=3)
        assert report.mse == mse(samples[:, 3], truth)
        assert report.mse_mean == pytest.approx(mse(samples.mean(axis=1), truth), rel=1e-12)
        assert report.crps == normalized_crps(samples, truth)
        assert report.variance == pytest.approx(samples.var(axis=1).mean(), rel=1e-12)
        assert report.variance == sample_variance(samples)

    def test_single_draw_ensembles_agree(self, draws):
        samples, truth = draws
        report = evaluate_samples(samples[:, :1], truth, MoMConfig(n_groups=1, n_repeats=1))
        assert report.mse == report.mse_ensemble == report.mse_mean
        assert report.variance == 0.0

    def test_csv(self, draws, tmp_path):
        samples, truth = draws
        report = evaluate_samples(samples, truth, MoMConfig(n_groups=2, n_repeats=1))
        report.to_csv(tmp_path / 'report.csv', tmp_path / 'windows.csv')
        assert (tmp_path / 'report.csv').read_text().startswith('MSE,MSE_E,MSE_mean')
        assert len((tmp_path / 'windows.csv').read_text().strip().splitlines()) == 4

    def test_shape_mismatch(self, draws):
        samples, truth = draws
        with pytest.raises(ShapeError):
            evaluate_samples(samples, truth[:2], MoMConfig(n_groups=2))

    def test_rejects_non_finite_score(self):
        with pytest.raises(NumericalError):
            EvalReport(mse=np.nan, mse_ensemble=0.0, mse_mean=0.0, mae=0.0, crps=0.0, crps_sum=0.0, variance=0.0,
                       n_windows=1, n_draws=1)
