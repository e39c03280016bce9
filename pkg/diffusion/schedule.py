"""
Noise schedules for the forward diffusion chain and their derived coefficient tables.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

MAX_BETA = 0.999
SCHEDULE_KINDS = ('cosine', 'linear', 'quadratic')


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Coefficient tables over K steps.

    ``alpha_bars`` and ``sigmas`` are indexed directly by step (index 0 is the
    clean-data convention ᾱ₀ = 1, σ₀ = 0); ``betas`` and ``alphas`` hold
    steps 1..K.
    """
    kind: str
    K: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    sigmas: np.ndarray
    offset: Optional[float] = None

    def __post_init__(self):
        for arr in (self.betas, self.alphas, self.alpha_bars, self.sigmas):
            arr.setflags(write=False)

    def _check_step(self, k: int, lowest: int = 1) -> None:
        if not lowest <= k <= self.K:
            raise ValueError(f"step {k} outside [{lowest}, {self.K}]")

    def beta(self, k: int) -> float:
        self._check_step(k)
        return float(self.betas[k - 1])

    def alpha(self, k: int) -> float:
        self._check_step(k)
        return float(self.alphas[k - 1])

    def alpha_bar(self, k: int) -> float:
        self._check_step(k, lowest=0)
        return float(self.alpha_bars[k])

    def sigma(self, k: int) -> float:
        self._check_step(k, lowest=0)
        return float(self.sigmas[k])

    def to_frame(self) -> pd.DataFrame:
        ks = np.arange(1, self.K + 1)
        return pd.DataFrame({
            'k': ks,
            'beta': self.betas,
            'alpha_bar': self.alpha_bars[1:],
            'sigma': self.sigmas[1:],
        })

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.17g')


def _from_betas(kind: str, betas: np.ndarray, offset: Optional[float] = None) -> NoiseSchedule:
    betas = np.asarray(betas, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    sigmas = np.zeros(len(betas) + 1)
    # posterior variance; zero at k=1 because ᾱ₀ = 1
    sigmas[1:] = np.sqrt((1.0 - alpha_bars[:-1]) / (1.0 - alpha_bars[1:]) * betas)
    return NoiseSchedule(kind=kind, K=len(betas), betas=betas, alphas=alphas,
                         alpha_bars=alpha_bars, sigmas=sigmas, offset=offset)


def build_cosine(K: int, s: float = 5.0, max_beta: float = MAX_BETA) -> NoiseSchedule:
    """Cosine schedule with offset ``s``; betas clipped to ``max_beta``."""
    if K < 1:
        raise ConfigurationError(f"cosine schedule needs K >= 1, got {K}")
    if s < 0:
        raise ConfigurationError(f"cosine offset must be >= 0, got {s}")

    def f(k):
        return np.cos(((k / K + s) / (1.0 + s)) * np.pi / 2.0) ** 2

    steps = np.arange(K + 1, dtype=np.float64)
    raw_bars = f(steps) / f(0.0)
    betas = np.minimum(1.0 - raw_bars[1:] / raw_bars[:-1], max_beta)
    schedule = _from_betas('cosine', betas, offset=float(s))
    logger.debug(f"Built cosine schedule K={K}, s={s}, alpha_bar[K]={schedule.alpha_bars[-1]:.3e}")
    return schedule


def _check_range(K: int, beta_min: float, beta_max: float) -> None:
    if K < 1:
        raise ConfigurationError(f"schedule needs K >= 1, got {K}")
    if not 0.0 < beta_min <= beta_max <= MAX_BETA:
        raise ConfigurationError(
            f"need 0 < beta_min <= beta_max <= {MAX_BETA}, got beta_min={beta_min}, beta_max={beta_max}")


def build_linear(K: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Betas evenly spaced between ``beta_min`` and ``beta_max``."""
    _check_range(K, beta_min, beta_max)
    return _from_betas('linear', np.linspace(beta_min, beta_max, K))


def build_quadratic(K: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Square roots of the betas evenly spaced."""
    _check_range(K, beta_min, beta_max)
    return _from_betas('quadratic', np.linspace(np.sqrt(beta_min), np.sqrt(beta_max), K) ** 2)


def build_schedule(kind: str, K: int, offset: float = 5.0,
                   beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    if kind == 'cosine':
        return build_cosine(K, offset)
    if kind == 'linear':
        return build_linear(K, beta_min, beta_max)
    if kind == 'quadratic':
        return build_quadratic(K, beta_min, beta_max)
    raise ConfigurationError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")


def posterior_coeffs(sched: NoiseSchedule, k: int) -> Tuple[float, float, float]:
    """(c_x0, c_xk, σ_k) of the Gaussian posterior q(Y_{k-1} | Y_k, Y_0)."""
    if not 1 <= k <= sched.K:
        raise ValueError(f"posterior_coeffs: step {k} outside [1, {sched.K}]")
    beta = sched.betas[k - 1]
    bar_k, bar_prev = sched.alpha_bars[k], sched.alpha_bars[k - 1]
    c_x0 = np.sqrt(bar_prev) * beta / (1.0 - bar_k)
    c_xk = np.sqrt(sched.alphas[k - 1]) * (1.0 - bar_prev) / (1.0 - bar_k)
    return float(c_x0), float(c_xk), float(sched.sigmas[k])


def transition_coeffs(sched: NoiseSchedule, k: int, k_prev: int) -> Tuple[float, float, float]:
    """Posterior coefficients for jumping from step ``k`` straight to ``k_prev`` < k.

    The pair is treated as one effective step whose alpha is ᾱ_k / ᾱ_{k_prev}.
    """
    if not 0 <= k_prev < k <= sched.K:
        raise ValueError(f"transition_coeffs: need 0 <= k_prev < k <= {sched.K}, got k={k}, k_prev={k_prev}")
    if k_prev == k - 1:
        return posterior_coeffs(sched, k)
    bar_k, bar_prev = sched.alpha_bars[k], sched.alpha_bars[k_prev]
    alpha_eff = bar_k / bar_prev
    beta_eff = 1.0 - alpha_eff
    c_x0 = np.sqrt(bar_prev) * beta_eff / (1.0 - bar_k)
    c_xk = np.sqrt(alpha_eff) * (1.0 - bar_prev) / (1.0 - bar_k)
    sigma = np.sqrt((1.0 - bar_prev) / (1.0 - bar_k) * beta_eff)
    return float(c_x0), float(c_xk), float(sigma)
