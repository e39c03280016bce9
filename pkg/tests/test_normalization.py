"""Tests for Normalization Independence and the shared-statistics baseline."""

import logging

import numpy as np
import pytest

from models.normalization import (NormalizationLayer, channel_stats, denormalize_pred, normalize_future_train,
                                  normalize_past, shared_stats_baseline)
from utils.exceptions import ConfigurationError, NumericalError


@pytest.fixture
def blocks():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((32, 3)) * [1.0, 5.0, 0.1] + [0.0, 100.0, -3.0]
    Y = rng.standard_normal((8, 3)) * [2.0, 1.0, 0.5] + [10.0, 140.0, 4.0]
    return X, Y


class TestStatistics:

    def test_population_moments(self, blocks):
        X, _ = blocks
        mu, sigma = channel_stats(X)
        assert mu.shape == (1, 3)
        np.testing.assert_allclose(mu[0], X.mean(axis=0))
        np.testing.assert_allclose(sigma[0], X.std(axis=0, ddof=0))

    def test_constant_channel_is_floored(self, caplog):
        X = np.column_stack([np.full(10, 4.2), np.arange(10.0)])
        with caplog.at_level(logging.WARNING):
            x_norm, state = normalize_past(X)
        assert state.sigma_x[0, 0] == 1e-5
        np.testing.assert_allclose(x_norm[:, 0], 0.0, atol=1e-9)
        assert np.all(np.isfinite(x_norm))
        assert 'constant channel' in caplog.text

    def test_batched_blocks(self, blocks):
        X, _ = blocks
        batch = np.stack([X, 2.0 * X])
        x_norm, state = normalize_past(batch)
        assert state.mu_x.shape == (2, 1, 3)
        np.testing.assert_allclose(x_norm[0], x_norm[1], atol=1e-12)


class TestNormalizationIndependence:

    def test_identity_affine_gives_zscores(self, blocks):
        X, _ = blocks
        x_norm, _ = normalize_past(X)
        np.testing.assert_allclose(x_norm.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(x_norm.std(axis=0), 1.0, atol=1e-12)

    def test_affine_applied(self, blocks):
        X, _ = blocks
        plain, _ = normalize_past(X)
        scaled, _ = normalize_past(X, gamma=[2.0, 0.5, 1.0], beta=[0.1, -1.0, 0.0])
        np.testing.assert_allclose(scaled, plain * [2.0, 0.5, 1.0] + [0.1, -1.0, 0.0], atol=1e-12)

    def test_denormalize_inverts_past(self, blocks):
        X, _ = blocks
        x_norm, state = normalize_past(X, gamma=[1.5, 0.7, 2.0], beta=[0.3, 0.0, -0.2])
        np.testing.assert_allclose(denormalize_pred(x_norm, state), X, rtol=1e-10, atol=1e-10)

    def test_future_targets_ignore_level_shift(self, blocks):
        X, Y = blocks
        target, mu, sigma = normalize_future_train(Y)
        shifted, _, _ = normalize_future_train(Y + 1000.0)
        np.testing.assert_allclose(target, shifted, atol=1e-9)
        np.testing.assert_allclose(mu[0], Y.mean(axis=0))

    def test_shared_targets_carry_level_shift(self, blocks):
        X, Y = blocks
        _, y_shared = shared_stats_baseline(X, Y)
        mu, sigma = channel_stats(X)
        np.testing.assert_allclose(y_shared, (Y - mu) / sigma)
        # the past block says nothing about the future's level here
        assert np.abs(y_shared.mean(axis=0)[0]) > 5.0

    def test_tiny_gamma_rejected(self, blocks):
        X, _ = blocks
        _, state = normalize_past(X, gamma=[1e-9, 1.0, 1.0])
        with pytest.raises(NumericalError, match='gamma'):
            denormalize_pred(np.zeros((4, 3)), state)


class TestNormalizationLayer:

    def test_starts_at_identity(self, blocks):
        X, _ = blocks
        layer = NormalizationLayer(3)
        np.testing.assert_array_equal(layer.gamma, np.ones(3))
        np.testing.assert_allclose(layer.past(X)[0], normalize_past(X)[0])

    def test_tensor_path_matches_array_path(self, blocks):
        X, _ = blocks
        layer = NormalizationLayer(3)
        layer.log_gamma.data[:] = [0.2, -0.1, 0.4]
        layer.beta.data[:] = [0.5, 0.0, -0.5]
        tensor, state = layer.past_tensor(X)
        array, _ = layer.past(X)
        np.testing.assert_allclose(tensor.data, array, atol=1e-12)
        np.testing.assert_allclose(state.gamma, np.exp([0.2, -0.1, 0.4]))

    def test_gradients_reach_affine(self, blocks):
        X, _ = blocks
        layer = NormalizationLayer(3)
        tensor, _ = layer.past_tensor(X)
        (tensor * tensor).sum().backward()
        assert np.all(layer.log_gamma.grad != 0.0)
        assert layer.beta.grad is not None

    def test_targets_by_mode(self, blocks):
        X, Y = blocks
        np.testing.assert_allclose(NormalizationLayer(3, 'ni').targets(X, Y), normalize_future_train(Y)[0])
        np.testing.assert_allclose(NormalizationLayer(3, 'shared').targets(X, Y), shared_stats_baseline(X, Y)[1])

    def test_shared_denormalize_skips_affine(self, blocks):
        X, Y = blocks
        layer = NormalizationLayer(3, 'shared')
        _, state = layer.past(X)
        np.testing.assert_allclose(layer.denormalize(layer.targets(X, Y), state), Y, rtol=1e-10)

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            NormalizationLayer(2, mode='revin')
