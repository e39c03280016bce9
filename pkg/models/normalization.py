"""
Normalization Independence.

Training: the past block is instance-normalized with a learnable per-channel
affine, the future block by its own statistics. Inference: predictions are
de-normalized with the past statistics and the inverse affine only. The
shared-statistics variant (both blocks z-scored by the past) is kept for ablations.

All functions take blocks of shape (..., T, M); statistics are per channel over T.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from nn import Tensor, parameter
from utils.exceptions import ConfigurationError, NumericalError

logger = logging.getLogger(__name__)

EPS = 1e-5
NORMALIZATION_MODES = ('ni', 'shared')


@dataclass
class NormState:
    """Per-window statistics plus the affine used to produce them."""
    mu_x: np.ndarray
    sigma_x: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    mu_y: Optional[np.ndarray] = None
    sigma_y: Optional[np.ndarray] = None


def channel_stats(block: np.ndarray, eps: float = EPS) -> Tuple[np.ndarray, np.ndarray]:
    """Population mean and std over the time axis, std floored at ``eps``."""
    block = np.asarray(block, dtype=np.float64)
    mu = block.mean(axis=-2, keepdims=True)
    sigma = block.std(axis=-2, keepdims=True)
    flat = sigma < eps
    if np.any(flat):
        logger.warning(f"{int(flat.sum())} constant channel(s) in block of shape {block.shape}; "
                       f"std floored at {eps}")
        sigma = np.where(flat, eps, sigma)
    return mu, sigma


def _affine(n_channels: int, gamma, beta) -> Tuple[np.ndarray, np.ndarray]:
    gamma = np.ones(n_channels) if gamma is None else np.broadcast_to(np.asarray(gamma, dtype=np.float64), (n_channels,))
    beta = np.zeros(n_channels) if beta is None else np.broadcast_to(np.asarray(beta, dtype=np.float64), (n_channels,))
    return np.array(gamma), np.array(beta)


def normalize_past(X: np.ndarray, gamma=None, beta=None, eps: float = EPS) -> Tuple[np.ndarray, NormState]:
    """X_norm = γ·(X − μ_X)/σ_X + β."""
    X = np.asarray(X, dtype=np.float64)
    gamma, beta = _affine(X.shape[-1], gamma, beta)
    mu, sigma = channel_stats(X, eps)
    x_norm = gamma * (X - mu) / sigma + beta
    return x_norm, NormState(mu_x=mu, sigma_x=sigma, gamma=gamma, beta=beta)


def normalize_future_train(Y: np.ndarray, eps: float = EPS) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-score the future block by its own statistics (training only)."""
    Y = np.asarray(Y, dtype=np.float64)
    mu, sigma = channel_stats(Y, eps)
    return (Y - mu) / sigma, mu, sigma


def denormalize_pred(y_norm: np.ndarray, state: NormState, eps: float = EPS) -> np.ndarray:
    """Ŷ = σ_X·(Ŷ_norm − β)/γ + μ_X, using past statistics only."""
    if np.any(np.abs(state.gamma) < eps):
        raise NumericalError(f"denormalize: |gamma| below {eps} in channels "
                             f"{np.flatnonzero(np.abs(state.gamma) < eps).tolist()}")
    return state.sigma_x * (np.asarray(y_norm) - state.beta) / state.gamma + state.mu_x


def shared_stats_baseline(X: np.ndarray, Y: np.ndarray, eps: float = EPS) -> Tuple[np.ndarray, np.ndarray]:
    """Both blocks z-scored by the past statistics."""
    X, Y = np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64)
    mu, sigma = channel_stats(X, eps)
    return (X - mu) / sigma, (Y - mu) / sigma


class NormalizationLayer:
    """Learnable per-channel affine (γ = exp(log γ), β) plus the chosen normalization path."""

    def __init__(self, n_channels: int, mode: str = 'ni', eps: float = EPS):
        if mode not in NORMALIZATION_MODES:
            raise ConfigurationError(f"unknown normalization mode {mode!r}; expected one of {NORMALIZATION_MODES}")
        self.n_channels = n_channels
        self.mode = mode
        self.eps = eps
        self.log_gamma = parameter(np.zeros(n_channels), name='norm.log_gamma')
        self.beta = parameter(np.zeros(n_channels), name='norm.beta')

    def parameters(self) -> Dict[str, Tensor]:
        return {'norm.log_gamma': self.log_gamma, 'norm.beta': self.beta}

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma.data)

    def past_tensor(self, X: np.ndarray) -> Tuple[Tensor, NormState]:
        """Differentiable past normalization; gradients reach γ and β."""
        X = np.asarray(X, dtype=np.float64)
        mu, sigma = channel_stats(X, self.eps)
        z = (X - mu) / sigma
        x_norm = z * self.log_gamma.exp() + self.beta
        return x_norm, NormState(mu_x=mu, sigma_x=sigma, gamma=self.gamma, beta=self.beta.data.copy())

    def past(self, X: np.ndarray) -> Tuple[np.ndarray, NormState]:
        return normalize_past(X, self.gamma, self.beta.data, self.eps)

    def targets(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Training targets for the denoiser."""
        if self.mode == 'ni':
            return normalize_future_train(Y, self.eps)[0]
        return shared_stats_baseline(X, Y, self.eps)[1]

    def denormalize(self, y_norm: np.ndarray, state: NormState) -> np.ndarray:
        if self.mode == 'ni':
            return denormalize_pred(y_norm, state, self.eps)
        return state.sigma_x * np.asarray(y_norm) + state.mu_x
