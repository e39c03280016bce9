"""
Forward corruption, ancestral reverse steps and the strided reverse sampler.

A denoiser is any callable ``denoiser(x_norm, y_k, k) -> y0_hat`` taking
``x_norm`` of shape (B, L, M), noisy targets ``y_k`` of shape (B, H, M) and the
integer steps ``k`` of shape (B,), and returning clean-target estimates of
shape (B, H, M).
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import ReverseSamplerConfig
from diffusion.schedule import NoiseSchedule, posterior_coeffs, transition_coeffs
from utils.exceptions import NumericalError, ShapeError
from utils.helpers import substream

logger = logging.getLogger(__name__)

Denoiser = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def forward_corrupt(y0: np.ndarray, k: int, noise: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Y_k = sqrt(ᾱ_k)·Y_0 + sqrt(1-ᾱ_k)·ε."""
    y0, noise = np.asarray(y0, dtype=np.float64), np.asarray(noise, dtype=np.float64)
    if y0.shape != noise.shape:
        raise ShapeError(f"forward_corrupt: target shape {y0.shape} != noise shape {noise.shape}")
    bar = sched.alpha_bar(k)
    return np.sqrt(bar) * y0 + np.sqrt(1.0 - bar) * noise


def forward_corrupt_batch(y0: np.ndarray, ks: np.ndarray, noise: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Per-sample version of ``forward_corrupt`` for a leading batch axis."""
    if y0.shape != noise.shape:
        raise ShapeError(f"forward_corrupt: target shape {y0.shape} != noise shape {noise.shape}")
    bars = sched.alpha_bars[np.asarray(ks)].reshape((-1,) + (1,) * (y0.ndim - 1))
    return np.sqrt(bars) * y0 + np.sqrt(1.0 - bars) * noise


def reverse_step(y_k: np.ndarray, k: int, y0_hat: np.ndarray, sched: NoiseSchedule,
                 noise: Optional[np.ndarray] = None) -> np.ndarray:
    """One ancestral step Y_k -> Y_{k-1}; no noise is added at k = 1."""
    if k < 1:
        raise ValueError(f"reverse_step: step must be >= 1, got {k}")
    if np.shape(y_k) != np.shape(y0_hat):
        raise ShapeError(f"reverse_step: Y_k shape {np.shape(y_k)} != prediction shape {np.shape(y0_hat)}")
    c_x0, c_xk, sigma = posterior_coeffs(sched, k)
    out = c_xk * y_k + c_x0 * y0_hat
    if k > 1 and noise is not None:
        out = out + sigma * noise
    return out


def strided_step(y_k: np.ndarray, k: int, k_prev: int, y0_hat: np.ndarray, sched: NoiseSchedule,
                 stochastic: bool, noise: Optional[np.ndarray] = None) -> np.ndarray:
    """Jump from step ``k`` to an earlier retained step ``k_prev`` (0 ends the chain).

    Stochastic mode samples the effective-step posterior; deterministic mode is
    the η = 0 implicit update.
    """
    if stochastic:
        c_x0, c_xk, sigma = transition_coeffs(sched, k, k_prev)
        out = c_xk * y_k + c_x0 * y0_hat
        if k_prev > 0 and noise is not None:
            out = out + sigma * noise
        return out
    bar_k, bar_prev = sched.alpha_bars[k], sched.alpha_bars[k_prev]
    eps_hat = (y_k - np.sqrt(bar_k) * y0_hat) / np.sqrt(1.0 - bar_k)
    return np.sqrt(bar_prev) * y0_hat + np.sqrt(1.0 - bar_prev) * eps_hat


def select_steps(K: int, steps: int, skip_kind: str = 'time_uniform') -> np.ndarray:
    """Retained steps, strictly decreasing from K and ending at 1 when steps > 1."""
    if not 1 <= steps <= K:
        raise ValueError(f"select_steps: need 1 <= steps <= K, got steps={steps}, K={K}")
    if steps == 1:
        return np.array([K])
    if skip_kind == 'time_uniform':
        raw = np.linspace(1.0, K, steps)
    elif skip_kind == 'time_quadratic':
        raw = np.linspace(1.0, np.sqrt(K), steps) ** 2
    else:
        raise ValueError(f"select_steps: unknown skip kind {skip_kind!r}")
    chosen = np.rint(raw).astype(int)
    for i in range(1, steps):
        chosen[i] = max(chosen[i], chosen[i - 1] + 1)
    for i in range(steps - 1, -1, -1):
        chosen[i] = min(chosen[i], K - (steps - 1 - i))
    return chosen[::-1].copy()


def _noise(seed: int, stream: int, draw: int, step: int, shape: Tuple[int, ...]) -> np.ndarray:
    return substream(seed, stream, draw, step).standard_normal(shape)


def run_chains(denoiser: Denoiser, x_norm: np.ndarray, keys: Sequence[Tuple[int, int]],
               cfg: ReverseSamplerConfig, sched: NoiseSchedule, horizon: int) -> np.ndarray:
    """Run one reverse chain per (stream, draw) key, conditioned on ``x_norm[i]``.

    Returns normalized-space draws of shape (len(keys), horizon, M).
    """
    x_norm = np.asarray(x_norm, dtype=np.float64)
    if x_norm.ndim != 3 or x_norm.shape[0] != len(keys):
        raise ShapeError(f"run_chains: expected conditioning of shape ({len(keys)}, L, M), got {x_norm.shape}")
    n_channels = x_norm.shape[2]
    shape = (horizon, n_channels)
    retained = select_steps(sched.K, cfg.steps, cfg.skip_kind)
    batch = len(keys)

    y = np.stack([_noise(cfg.rng_seed, s, d, 0, shape) for s, d in keys])
    for i, k in enumerate(retained):
        k = int(k)
        k_prev = int(retained[i + 1]) if i + 1 < len(retained) else 0
        y0_hat = denoiser(x_norm, y, np.full(batch, k))
        if not np.all(np.isfinite(y0_hat)):
            raise NumericalError(f"sample: denoiser returned non-finite values at step {k}")
        noise = None
        if cfg.stochastic and k_prev > 0:
            noise = np.stack([_noise(cfg.rng_seed, s, d, k, shape) for s, d in keys])
        y = strided_step(y, k, k_prev, y0_hat, sched, cfg.stochastic, noise)
    return y


def sample(denoiser: Denoiser, x_norm: np.ndarray, cfg: ReverseSamplerConfig, sched: NoiseSchedule,
           horizon: int, draw_index: int = 0, stream: int = 0) -> np.ndarray:
    """One normalized-space draw of shape (H, M) for a single past block (L, M)."""
    return run_chains(denoiser, np.asarray(x_norm)[None], [(stream, draw_index)], cfg, sched, horizon)[0]


def sample_batch(denoiser: Denoiser, x_norm: np.ndarray, n_draws: int, cfg: ReverseSamplerConfig,
                 sched: NoiseSchedule, horizon: int, stream: int = 0) -> 'ForecastSamples':
    """``n_draws`` independent draws for one past block, evaluated in chunks."""
    if n_draws < 1:
        raise ValueError(f"sample_batch: need at least one draw, got {n_draws}")
    x_norm = np.asarray(x_norm, dtype=np.float64)
    parts: List[np.ndarray] = []
    for start in range(0, n_draws, cfg.chunk_size):
        draws = range(start, min(start + cfg.chunk_size, n_draws))
        cond = np.broadcast_to(x_norm, (len(draws),) + x_norm.shape)
        parts.append(run_chains(denoiser, cond, [(stream, d) for d in draws], cfg, sched, horizon))
    return ForecastSamples(np.concatenate(parts, axis=0))


def sample_windows(denoiser: Denoiser, x_norm: np.ndarray, n_draws: int, cfg: ReverseSamplerConfig,
                   sched: NoiseSchedule, horizon: int, streams: Optional[Sequence[int]] = None) -> np.ndarray:
    """Draws for many past blocks at once: (W, L, M) -> (W, n_draws, H, M).

    Window ``w`` uses noise stream ``streams[w]`` (its index by default), so its
    draws do not depend on which other windows share the batch.
    """
    x_norm = np.asarray(x_norm, dtype=np.float64)
    n_windows = x_norm.shape[0]
    streams = list(range(n_windows)) if streams is None else list(streams)
    keys = [(streams[w], d) for w in range(n_windows) for d in range(n_draws)]
    rows = np.repeat(np.arange(n_windows), n_draws)
    out = np.empty((len(keys), horizon, x_norm.shape[2]))
    for start in range(0, len(keys), cfg.chunk_size):
        stop = min(start + cfg.chunk_size, len(keys))
        out[start:stop] = run_chains(denoiser, x_norm[rows[start:stop]], keys[start:stop], cfg, sched, horizon)
    return out.reshape(n_windows, n_draws, horizon, x_norm.shape[2])


@dataclass
class ForecastSamples:
    """Probabilistic draws of shape (N, H, M)."""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ShapeError(f"ForecastSamples: expected (N, H, M), got {self.values.shape}")

    @property
    def n_draws(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]

    def to_frame(self) -> pd.DataFrame:
        n, h, m = self.values.shape
        draw, t, channel = np.meshgrid(np.arange(n), np.arange(h), np.arange(m), indexing='ij')
        return pd.DataFrame({
            'draw': draw.ravel(),
            't': t.ravel(),
            'channel': channel.ravel(),
            'value': self.values.ravel(),
        })

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    @classmethod
    def from_csv(cls, path: str) -> 'ForecastSamples':
        frame = pd.read_csv(path, float_precision='round_trip')
        n, h, m = (int(frame[c].max()) + 1 for c in ('draw', 't', 'channel'))
        values = np.full((n, h, m), np.nan)
        values[frame['draw'], frame['t'], frame['channel']] = frame['value'].to_numpy(dtype=np.float64)
        if np.isnan(values).any():
            raise ShapeError(f"ForecastSamples: {path} does not cover a full (draw, t, channel) grid")
        return cls(values)

    def save_binary(self, path: str) -> None:
        with open(path, 'wb') as f:
            np.save(f, self.values.astype('<f8'), allow_pickle=False)

    @classmethod
    def load_binary(cls, path: str) -> 'ForecastSamples':
        with open(path, 'rb') as f:
            return cls(np.load(f, allow_pickle=False))
