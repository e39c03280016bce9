"""
Command handlers behind the CLI verbs.
Each handler takes a validated run configuration, writes its CSV artifacts under
the run's output directory and returns the paths (or report) it produced.
"""
import os
import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from config import RunConfig
from data import Dataset, dataset_frame, future_origin, load_dataset, synth_from_config, truth_frame, window_arrays
from diffusion import build_schedule
from evaluation import EvalReport
from models.forecaster import SimDiffForecaster
from models.model_manager import CheckpointManager
from services.forecast_service import ForecastService, ablation_sampler
from services.trainer import FitResult, fit
from utils.exceptions import CheckpointError
from utils.helpers import ensure_dir
from utils.logger import log_command, log_custom_event

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


class CommandHandlers:
    """Shared command logic for the command-line front end."""

    def __init__(self, forecast_service: ForecastService, checkpoint_manager: CheckpointManager):
        self.forecast_service = forecast_service
        self.checkpoint_manager = checkpoint_manager

    # helpers ------------------------------------------------------------------
    @staticmethod
    def _out(run_config: RunConfig, filename: str) -> str:
        return os.path.join(ensure_dir(run_config.output_dir), filename)

    def _checkpoint_path(self, run_config: RunConfig, checkpoint: Optional[str]) -> str:
        path = checkpoint or os.path.join(run_config.output_dir, 'model.ckpt')
        if not self.checkpoint_manager.checkpoint_exists(path):
            raise CheckpointError(f"Checkpoint not found: {path} (run 'train' first or pass --checkpoint)")
        return path

    def _load(self, run_config: RunConfig, checkpoint: Optional[str]) -> Tuple[Dataset, SimDiffForecaster]:
        dataset = load_dataset(run_config.dataset)
        forecaster = self.forecast_service.load_model(self._checkpoint_path(run_config, checkpoint),
                                                      run_config, dataset.n_channels)
        return dataset, forecaster

    def _train_model(self, run_config: RunConfig, dataset: Dataset,
                     verbose: bool) -> Tuple[SimDiffForecaster, FitResult]:
        X_train, Y_train, _ = window_arrays(dataset, 'train', run_config.dataset.stride)
        X_val, Y_val, _ = window_arrays(dataset, 'val', run_config.dataset.eval_stride,
                                        limit=run_config.train.max_val_windows)
        forecaster = SimDiffForecaster(run_config.denoiser, run_config.train, dataset.n_channels)
        forecaster.horizon = dataset.H
        result = fit(forecaster, (X_train, Y_train), (X_val, Y_val), run_config.train, verbose=verbose)
        return forecaster, result

    def _test_windows(self, run_config: RunConfig, dataset: Dataset):
        return window_arrays(dataset, 'test', run_config.dataset.eval_stride,
                             limit=run_config.evaluation.max_windows)

    # verbs ----------------------------------------------------------------------
    @log_command("synth")
    def synth(self, run_config: RunConfig) -> Dict[str, str]:
        """Generate the configured synthetic drift series."""
        synth_config = run_config.dataset.synthetic or run_config.synth
        dataset = synth_from_config(synth_config, run_config.dataset)
        paths = {'data': self._out(run_config, 'synth.csv'), 'truth': self._out(run_config, 'synth_truth.csv')}
        dataset_frame(dataset).to_csv(paths['data'], index=False, float_format=FLOAT_FORMAT)
        truth_frame(dataset).to_csv(paths['truth'], index=False)
        log_custom_event("synth_generated", f"Generated {dataset.name} with T={dataset.n_steps}",
                         {'kind': synth_config.kind, 'T': dataset.n_steps, 'M': dataset.n_channels,
                          'seed': synth_config.seed})
        return paths

    @log_command("train")
    def train(self, run_config: RunConfig, verbose: bool = False) -> Dict[str, Any]:
        dataset = load_dataset(run_config.dataset)
        forecaster, result = self._train_model(run_config, dataset, verbose)

        paths = {'checkpoint': self._out(run_config, 'model.ckpt'), 'history': self._out(run_config, 'history.csv')}
        result.history_csv(paths['history'])
        entry = self.checkpoint_manager.save(forecaster, run_config, paths['checkpoint'], extra={
            'best_epoch': result.best_epoch,
            'best_val_mse': result.best_val_mse,
            'seed': run_config.train.seed,
        })
        log_custom_event("checkpoint_saved", f"Checkpoint saved to {paths['checkpoint']}",
                         {'best_epoch': result.best_epoch, 'best_val_mse': result.best_val_mse,
                          'epochs_run': len(result.history), 'fingerprint': entry['fingerprint']})
        return {**paths, 'best_epoch': result.best_epoch, 'best_val_mse': result.best_val_mse}

    @log_command("forecast")
    def forecast(self, run_config: RunConfig, checkpoint: Optional[str] = None,
                 verbose: bool = False) -> Dict[str, str]:
        """Forecast the H steps after the end of the series."""
        dataset, forecaster = self._load(run_config, checkpoint)
        origin = future_origin(dataset)
        samples, point = self.forecast_service.forecast(forecaster, dataset.values[origin:], dataset.H, run_config)

        paths = {'samples': self._out(run_config, 'samples.csv'), 'point': self._out(run_config, 'point.csv')}
        samples.to_csv(paths['samples'])
        point.to_csv(paths['point'], index=False, float_format=FLOAT_FORMAT)
        log_custom_event("forecast_written", f"Wrote {samples.n_draws} draws of horizon {samples.horizon}",
                         {'origin': origin, 'n_draws': samples.n_draws})
        return paths

    @log_command("evaluate")
    def evaluate(self, run_config: RunConfig, checkpoint: Optional[str] = None,
                 verbose: bool = False) -> EvalReport:
        dataset, forecaster = self._load(run_config, checkpoint)
        X, Y, origins = self._test_windows(run_config, dataset)
        report = self.forecast_service.evaluate(forecaster, X, Y, run_config, origins, verbose=verbose)
        report.to_csv(self._out(run_config, 'report.csv'), self._out(run_config, 'report_windows.csv'))
        log_custom_event("evaluation_finished", f"Evaluated {report.n_windows} test windows", report.as_dict())
        return report

    @log_command("ablate_ni")
    def ablate_ni(self, run_config: RunConfig, verbose: bool = False) -> pd.DataFrame:
        """Train twins that differ only in the normalization path and score both."""
        rows = []
        for seed in run_config.ablation.seeds:
            seeded = run_config.model_copy(deep=True).apply_seed(seed)
            dataset = load_dataset(seeded.dataset)
            X, Y, origins = self._test_windows(seeded, dataset)
            sampler_config, mom_config = ablation_sampler(seeded)
            for mode in ('ni', 'shared'):
                twin = seeded.model_copy(deep=True)
                twin.train.normalization = mode
                twin.sampler, twin.mom = sampler_config, mom_config
                forecaster, _ = self._train_model(twin, dataset, verbose)
                report = self.forecast_service.evaluate(forecaster, X, Y, twin, origins)
                rows.append({'seed': seed, 'ni': mode == 'ni', 'normalization': mode,
                             'mse': report.mse, 'mae': report.mae})
                logger.info(f"ablation seed={seed} normalization={mode}: MSE {report.mse:.5g}")
        frame = pd.DataFrame(rows, columns=['seed', 'ni', 'normalization', 'mse', 'mae'])
        frame.to_csv(self._out(run_config, 'ablate_ni.csv'), index=False, float_format=FLOAT_FORMAT)
        return frame

    @log_command("bench")
    def bench(self, run_config: RunConfig, checkpoint: Optional[str] = None, verbose: bool = False) -> pd.DataFrame:
        dataset, forecaster = self._load(run_config, checkpoint)
        frame = self.forecast_service.bench(forecaster, dataset.L, run_config.bench.horizons,
                                            run_config.bench.repeats, run_config.sampler,
                                            seed=run_config.sampler.rng_seed, verbose=verbose)
        frame.to_csv(self._out(run_config, 'bench.csv'), index=False, float_format='%.6g')
        return frame

    @log_command("schedule")
    def schedule(self, run_config: RunConfig) -> str:
        train = run_config.train
        sched = build_schedule(train.schedule, train.K, train.offset, train.beta_min, train.beta_max)
        path = self._out(run_config, 'schedule.csv')
        sched.to_csv(path)
        return path

    @log_command("sensitivity")
    def sensitivity(self, run_config: RunConfig, checkpoint: Optional[str] = None,
                    verbose: bool = False) -> pd.DataFrame:
        dataset, forecaster = self._load(run_config, checkpoint)
        X, Y, _ = self._test_windows(run_config, dataset)
        frame = self.forecast_service.sensitivity(forecaster, X, Y, run_config, verbose=verbose)
        frame.to_csv(self._out(run_config, 'sensitivity.csv'), index=False, float_format=FLOAT_FORMAT)
        return frame
