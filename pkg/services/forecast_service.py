"""
Forecast service for sampling, evaluation and timing of trained forecasters.
"""
import os
import time
import logging
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import MoMConfig, ReverseSamplerConfig, RunConfig
from diffusion import ForecastSamples, sample_windows, select_steps
from evaluation import EvalReport, evaluate_samples, mean_ensemble, mom_grid, mse, single_draw
from models.denoiser import token_offsets
from models.forecaster import SimDiffForecaster
from models.model_manager import CheckpointManager
from utils.exceptions import ConfigurationError
from utils.helpers import substream

logger = logging.getLogger(__name__)


class WindowForecaster(Protocol):
    """Anything producing original-scale draws (W, N, H, M) for past blocks (W, L, M)."""

    def forecast_windows(self, X: np.ndarray, n_draws: int, sampler_config: ReverseSamplerConfig,
                         streams: Optional[Sequence[int]] = None, horizon: Optional[int] = None) -> np.ndarray:
        ...


class ForecastService:
    """Service for forecaster inference operations."""

    def __init__(self, checkpoint_manager: CheckpointManager, window_batch: int = 64):
        self.checkpoint_manager = checkpoint_manager
        self.window_batch = window_batch
        self._model_cache: Dict[Tuple[str, float, str], SimDiffForecaster] = {}

    # checkpoints --------------------------------------------------------------
    def load_model(self, path: str, run_config: RunConfig, n_channels: int) -> SimDiffForecaster:
        """Load a checkpoint, reusing an already loaded copy of the same file."""
        fingerprint = run_config.model_fingerprint(n_channels)
        mtime = os.path.getmtime(path) if os.path.exists(path) else 0.0
        cache_key = (os.path.abspath(path), mtime, fingerprint)
        if cache_key not in self._model_cache:
            forecaster, _ = self.checkpoint_manager.load(path, run_config, n_channels)
            self._model_cache[cache_key] = forecaster
        forecaster = self._model_cache[cache_key]
        forecaster.horizon = run_config.dataset.H
        return forecaster

    def clear_cache(self) -> None:
        self._model_cache.clear()
        logger.info("Forecaster cache cleared")

    def get_cached_models(self) -> List[str]:
        return [key[0] for key in self._model_cache]

    # sampling -------------------------------------------------------------------
    def draw_windows(self, forecaster: WindowForecaster, X: np.ndarray, horizon: int,
                     sampler_config: ReverseSamplerConfig, n_draws: Optional[int] = None,
                     verbose: bool = False) -> np.ndarray:
        """Draws for many windows, batched; window w always uses noise stream w."""
        n_draws = n_draws or sampler_config.n_draws
        parts = []
        starts = range(0, len(X), self.window_batch)
        for start in tqdm(starts, desc='sampling', disable=not verbose):
            stop = min(start + self.window_batch, len(X))
            parts.append(forecaster.forecast_windows(X[start:stop], n_draws, sampler_config,
                                                     streams=range(start, stop), horizon=horizon))
        return np.concatenate(parts, axis=0)

    def forecast(self, forecaster: WindowForecaster, X: np.ndarray, horizon: int, run_config: RunConfig
                 ) -> Tuple[ForecastSamples, pd.DataFrame]:
        """Draws for one past block plus the MoM / mean / single point forecasts."""
        samples = ForecastSamples(self.draw_windows(forecaster, X[None], horizon, run_config.sampler)[0])
        values = samples.values
        mom_config = run_config.mom
        if mom_config.n_groups > samples.n_draws:
            mom_config = mom_config.model_copy(update={'n_groups': samples.n_draws})
        points = {
            'mom': mom_grid(values, mom_config),
            'mean': mean_ensemble(values),
            'single': single_draw(values, run_config.evaluation.single_index),
        }
        h, m = np.meshgrid(np.arange(samples.horizon), np.arange(samples.n_channels), indexing='ij')
        point = pd.DataFrame({'t': h.ravel(), 'channel': m.ravel(),
                              **{name: value.ravel() for name, value in points.items()}})
        return samples, point

    def evaluate(self, forecaster: WindowForecaster, X: np.ndarray, Y: np.ndarray, run_config: RunConfig,
                 origins: Optional[np.ndarray] = None, verbose: bool = False) -> EvalReport:
        """Score the full ensemble path on the given windows."""
        if len(X) == 0:
            raise ConfigurationError("evaluate: no test windows")
        samples = self.draw_windows(forecaster, X, Y.shape[1], run_config.sampler, verbose=verbose)
        return evaluate_samples(samples, Y, run_config.mom, run_config.evaluation.single_index, origins)

    def sensitivity(self, forecaster: WindowForecaster, X: np.ndarray, Y: np.ndarray, run_config: RunConfig,
                    verbose: bool = False) -> pd.DataFrame:
        """Single-draw and MoM MSE across retained-step counts and skip types."""
        rows = []
        K = run_config.train.K
        for skip_kind in run_config.sensitivity.skip_kinds:
            for steps in run_config.sensitivity.steps:
                if steps > K:
                    logger.warning(f"sensitivity: skipping steps={steps} > K={K}")
                    continue
                sampler_config = run_config.sampler.model_copy(update={'steps': steps, 'skip_kind': skip_kind})
                samples = self.draw_windows(forecaster, X, Y.shape[1], sampler_config, verbose=verbose)
                single = samples[:, run_config.evaluation.single_index]
                ensembled = np.stack([mom_grid(s, run_config.mom) for s in samples])
                rows.append({'skip_kind': skip_kind, 'steps': steps,
                             'retained': ' '.join(str(k) for k in select_steps(K, steps, skip_kind)),
                             'mse_single': mse(single, Y), 'mse_mom': mse(ensembled, Y)})
        return pd.DataFrame(rows, columns=['skip_kind', 'steps', 'retained', 'mse_single', 'mse_mom'])

    # timing ---------------------------------------------------------------------
    def bench(self, forecaster: SimDiffForecaster, L: int, horizons: Sequence[int], repeats: int,
              sampler_config: ReverseSamplerConfig, seed: int = 0, verbose: bool = False) -> pd.DataFrame:
        """Wall-clock milliseconds of one draw for each horizon (best of ``repeats``)."""
        patch, stride = forecaster.denoiser_config.patch_len, forecaster.denoiser_config.stride
        X = substream(seed, 99).standard_normal((1, L, forecaster.n_channels))
        x_norm, _ = forecaster.norm.past(X)
        rows = []
        for horizon in horizons:
            if horizon < patch:
                logger.warning(f"bench: horizon {horizon} shorter than patch length {patch}; skipped")
                continue
            step_times: List[float] = []

            def timed(x, y, k):
                started = time.perf_counter()
                out = forecaster.predict_clean(x, y, k)
                step_times.append((time.perf_counter() - started) * 1e3)
                return out

            best, best_steps = float('inf'), []
            for _ in range(repeats):
                step_times.clear()
                started = time.perf_counter()
                sample_windows(timed, x_norm, 1, sampler_config, forecaster.schedule, horizon)
                elapsed = (time.perf_counter() - started) * 1e3
                if elapsed < best:
                    best, best_steps = elapsed, list(step_times)
            row: Dict[str, Any] = {'horizon': horizon,
                                   'n_tokens': len(token_offsets(L, patch, stride)) +
                                   len(token_offsets(horizon, patch, stride)) + 1,
                                   'ms_per_draw': best, 'repeats': repeats}
            if verbose:
                row.update({f'step_{i + 1}_ms': t for i, t in enumerate(best_steps)})
            rows.append(row)
            logger.info(f"bench: H={horizon} {best:.2f} ms per draw")
        return pd.DataFrame(rows)


def ablation_sampler(run_config: RunConfig) -> Tuple[ReverseSamplerConfig, MoMConfig]:
    """Deterministic single-draw settings used to score ablation twins."""
    return (run_config.sampler.model_copy(update={'n_draws': 1, 'stochastic': False}),
            run_config.mom.model_copy(update={'n_groups': 1, 'n_repeats': 1}))
