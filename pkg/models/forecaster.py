"""
Forecaster bundle: denoiser, normalization layer and noise schedule.
"""
import logging
from typing import Dict, Optional, Sequence

import numpy as np

from config import DenoiserConfig, ReverseSamplerConfig, TrainConfig
from diffusion import ForecastSamples, NoiseSchedule, build_schedule, sample_windows
from models.denoiser import DenoiserModel
from models.normalization import NormalizationLayer, NormState
from nn import Tensor, no_grad
from utils.exceptions import CheckpointError, ShapeError

logger = logging.getLogger(__name__)


class SimDiffForecaster:
    """Single-stage diffusion forecaster over M-channel series."""

    def __init__(self, denoiser_config: DenoiserConfig, train_config: TrainConfig, n_channels: int):
        if n_channels < 1:
            raise ShapeError(f"forecaster: need at least one channel, got {n_channels}")
        self.denoiser_config = denoiser_config
        self.train_config = train_config
        self.n_channels = n_channels
        self.horizon: Optional[int] = None
        self.denoiser = DenoiserModel(denoiser_config, seed=train_config.seed)
        self.norm = NormalizationLayer(n_channels, mode=train_config.normalization)
        self.schedule: NoiseSchedule = build_schedule(train_config.schedule, train_config.K, train_config.offset,
                                                      train_config.beta_min, train_config.beta_max)

    @property
    def K(self) -> int:
        return self.schedule.K

    # parameters -----------------------------------------------------------
    def parameters(self) -> Dict[str, Tensor]:
        return {**self.denoiser.parameters(), **self.norm.parameters()}

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(f"parameter names differ: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise CheckpointError(f"parameter {name!r}: stored shape {value.shape} != model shape {p.shape}")
            p.data = value.copy()

    def train(self) -> 'SimDiffForecaster':
        self.denoiser.training = True
        return self

    def eval(self) -> 'SimDiffForecaster':
        self.denoiser.training = False
        return self

    # inference --------------------------------------------------------------
    def predict_clean(self, x_norm: np.ndarray, y_k: np.ndarray, k: np.ndarray) -> np.ndarray:
        """Denoiser callable used by the reverse sampler."""
        with no_grad():
            return self.denoiser.predict(x_norm, y_k, k, self.K).data

    def forecast_windows(self, X: np.ndarray, n_draws: int, sampler_config: ReverseSamplerConfig,
                         streams: Optional[Sequence[int]] = None, horizon: Optional[int] = None) -> np.ndarray:
        """Original-scale draws for a batch of past blocks: (W, L, M) -> (W, N, H, M)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[2] != self.n_channels:
            raise ShapeError(f"forecast: expected past blocks of shape (W, L, {self.n_channels}), got {X.shape}")
        horizon = horizon or self._default_horizon
        x_norm, state = self.norm.past(X)
        draws = sample_windows(self.predict_clean, x_norm, n_draws, sampler_config, self.schedule, horizon, streams)
        expanded = NormState(mu_x=state.mu_x[:, None], sigma_x=state.sigma_x[:, None],
                             gamma=state.gamma, beta=state.beta)
        return self.norm.denormalize(draws, expanded)

    def forecast(self, X: np.ndarray, n_draws: int, sampler_config: ReverseSamplerConfig,
                 horizon: Optional[int] = None, stream: int = 0) -> ForecastSamples:
        """Draws for a single past block (L, M)."""
        X = np.asarray(X, dtype=np.float64)
        return ForecastSamples(self.forecast_windows(X[None], n_draws, sampler_config, [stream], horizon)[0])

    @property
    def _default_horizon(self) -> int:
        if self.horizon is None:
            raise ShapeError("forecast: horizon not set; pass horizon= or set forecaster.horizon")
        return self.horizon
