"""
Sinusoid-plus-drift generator for the distribution-shift experiments.
"""
import logging
from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from config import DatasetConfig, SynthConfig
from data.dataset import Dataset, resolve_splits
from utils.exceptions import DataError

logger = logging.getLogger(__name__)

MIN_SLACK = 100


def _params(kind: str, T: int, M: int, params: Optional[Mapping[str, Any]], seed: int) -> SynthConfig:
    try:
        return SynthConfig.model_validate({**(params or {}), 'kind': kind, 'T': T, 'M': M, 'seed': seed})
    except ValueError as e:
        raise DataError(f"invalid synthetic parameters: {e}") from e


def drift_component(cfg: SynthConfig, t: np.ndarray) -> Dict[str, np.ndarray]:
    """Additive offset and multiplicative scale of the drift at times ``t``."""
    offset = np.zeros_like(t, dtype=np.float64)
    scale = np.ones_like(t, dtype=np.float64)
    if cfg.kind == 'trend':
        offset = cfg.slope * t
        if cfg.break_at is not None:
            knee = break_index(cfg)
            offset = np.where(t < knee, offset, cfg.slope * knee + cfg.slope_after * (t - knee))
    elif cfg.kind == 'level-shift':
        every = cfg.shift_every or max(cfg.T // 4, 1)
        offset = cfg.shift * np.floor(t / every)
    else:
        scale = 1.0 + (cfg.scale_ramp - 1.0) * t / max(cfg.T - 1, 1)
    return {'offset': offset, 'scale': scale}


def break_index(cfg: SynthConfig) -> int:
    """Time index where the trend switches from ``slope`` to ``slope_after``."""
    return int(cfg.T * cfg.break_at)


def expected_mean_shift(cfg: SynthConfig, L: int, H: int) -> float:
    """Closed-form future-minus-past mean of the drift term for one window (trend only).

    Windows that straddle a trend break are not covered; use the slope of the
    regime the window lies in.
    """
    if cfg.kind != 'trend':
        raise ValueError(f"closed-form mean shift only defined for a linear trend, not {cfg.kind!r}")
    return cfg.slope * (L + H) / 2.0


def synth_drift(kind: str, T: int, M: int, params: Optional[Mapping[str, Any]] = None, seed: int = 0,
                L: int = 96, H: int = 24, split_fractions: Sequence[float] = (0.7, 0.1, 0.2),
                name: Optional[str] = None) -> Dataset:
    """Sinusoidal base per channel plus the configured drift and Gaussian noise.

    The drift parameters are stored on ``Dataset.drift`` so tests can compare
    window statistics with their ground truth.
    """
    cfg = _params(kind, T, M, params, seed)
    if T < L + H + MIN_SLACK:
        raise DataError(f"synthetic series of length {T} is too short for L={L}, H={H} "
                        f"(needs at least {L + H + MIN_SLACK})")

    rng = np.random.default_rng(cfg.seed)
    t = np.arange(T, dtype=np.float64)
    phases = 2.0 * np.pi * np.arange(M) / M
    base = cfg.amplitude * np.sin(2.0 * np.pi * t[:, None] / cfg.period + phases[None, :])
    noise = rng.normal(0.0, cfg.noise, size=(T, M)) if cfg.noise > 0 else np.zeros((T, M))
    drift = drift_component(cfg, t)
    values = (base + noise) * drift['scale'][:, None] + drift['offset'][:, None]

    truth: Dict[str, Any] = {'kind': cfg.kind, **cfg.model_dump(exclude={'kind'})}
    if cfg.kind == 'trend':
        truth['window_mean_shift'] = expected_mean_shift(cfg, L, H)
        if cfg.break_at is not None:
            truth['break_point'] = break_index(cfg)
            truth['window_mean_shift_after'] = cfg.slope_after * (L + H) / 2.0
    elif cfg.kind == 'level-shift':
        every = cfg.shift_every or max(T // 4, 1)
        truth['change_points'] = list(range(every, T, every))

    splits = resolve_splits(T, None, split_fractions)
    logger.debug(f"Generated {cfg.kind} series T={T}, M={M}, seed={cfg.seed}")
    return Dataset(name=name or f'synth-{cfg.kind}', values=values, splits=splits, L=L, H=H, drift=truth)


def synth_from_config(cfg: SynthConfig, dataset_cfg: DatasetConfig) -> Dataset:
    dataset = synth_drift(cfg.kind, cfg.T, cfg.M, cfg.model_dump(exclude={'kind', 'T', 'M', 'seed'}), cfg.seed,
                          L=dataset_cfg.L, H=dataset_cfg.H, split_fractions=dataset_cfg.split_fractions,
                          name=dataset_cfg.name if dataset_cfg.name != 'dataset' else None)
    if dataset_cfg.split_counts is not None:
        dataset.splits = resolve_splits(dataset.n_steps, dataset_cfg.split_counts)
    return dataset


def dataset_frame(dataset: Dataset) -> pd.DataFrame:
    """Dataset values as a frame with a leading integer time column."""
    frame = pd.DataFrame(dataset.values, columns=dataset.columns)
    frame.insert(0, 'time', np.arange(dataset.n_steps))
    return frame


def truth_frame(dataset: Dataset) -> pd.DataFrame:
    """Ground-truth drift parameters as (key, value) rows."""
    return pd.DataFrame({'key': list(dataset.drift), 'value': [str(v) for v in dataset.drift.values()]})
