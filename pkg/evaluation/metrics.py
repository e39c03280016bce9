"""
Point and probabilistic forecast metrics and the evaluation report.

CRPS uses the sample (energy-form) estimator
    CRPS = (1/N)Σ|x_i − y| − (1/(2N²))ΣΣ|x_i − x_j|,
with the pairwise term computed from sorted draws. Normalized CRPS and
CRPS-sum divide by the summed absolute target.
"""
import logging
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import pandas as pd
from tabulate import tabulate

from config import MoMConfig
from evaluation.ensemble import mean_ensemble, mom_grid, single_draw
from utils.exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)


def _check_pair(name: str, pred: np.ndarray, truth: np.ndarray):
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"{name}: prediction shape {pred.shape} != target shape {truth.shape}")
    return pred, truth


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = _check_pair('mse', pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mae(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = _check_pair('mae', pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def crps_grid(samples: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-cell CRPS for draws (N, ...) against targets (...)."""
    samples = np.asarray(samples, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if samples.ndim == 0 or samples.shape[0] == 0:
        raise ShapeError("crps: no samples")
    if samples.shape[1:] != truth.shape:
        raise ShapeError(f"crps: sample cell shape {samples.shape[1:]} != target shape {truth.shape}")
    n = samples.shape[0]
    skill = np.abs(samples - truth).mean(axis=0)
    ordered = np.sort(samples, axis=0)
    # ΣΣ|x_i − x_j| = 2 Σ_i (2i − N + 1) x_(i) over sorted draws
    weights = (2.0 * np.arange(n) - n + 1).reshape((-1,) + (1,) * (samples.ndim - 1))
    spread = 2.0 * (weights * ordered).sum(axis=0) / (2.0 * n * n)
    spread = np.where(ordered[0] == ordered[-1], 0.0, spread)
    return np.maximum(skill - spread, 0.0)


def crps(samples: np.ndarray, y: float) -> float:
    return float(crps_grid(np.asarray(samples, dtype=np.float64).reshape(-1), np.asarray(y, dtype=np.float64)))


def _ratio(name: str, numerator: float, denominator: float) -> float:
    if denominator == 0.0:
        if numerator == 0.0:
            return 0.0
        raise NumericalError(f"{name}: target magnitude is zero, normalization undefined")
    return numerator / denominator


def normalized_crps(samples: np.ndarray, truth: np.ndarray) -> float:
    """Σ CRPS / Σ|y| over every cell; ``samples`` has the draw axis at position -3 of (…, N, H, M)."""
    samples, truth = np.asarray(samples, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    per_cell = crps_grid(np.moveaxis(samples, -3, 0), truth)
    return _ratio('normalized crps', float(per_cell.sum()), float(np.abs(truth).sum()))


def crps_sum(samples: np.ndarray, truth: np.ndarray) -> float:
    """CRPS of the channel-summed series, normalized by Σ_t |Σ_m y|.

    Accepts (N, H, M) with (H, M) targets, or a leading window axis on both.
    """
    samples, truth = np.asarray(samples, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if samples.shape[-2:] != truth.shape[-2:]:
        raise ShapeError(f"crps_sum: sample cell shape {samples.shape[-2:]} != target shape {truth.shape[-2:]}")
    summed_draws = samples.sum(axis=-1)
    summed_truth = truth.sum(axis=-1)
    per_step = crps_grid(np.moveaxis(summed_draws, -2, 0), summed_truth)
    return _ratio('crps_sum', float(per_step.sum()), float(np.abs(summed_truth).sum()))


def sample_variance(samples: np.ndarray) -> float:
    """Mean over cells of the across-draw population variance."""
    samples = np.asarray(samples, dtype=np.float64)
    return float(samples.var(axis=-3).mean())


@dataclass
class EvalReport:
    """Aggregate scores over the evaluated windows plus a per-window table."""
    mse: float
    mse_ensemble: float
    mse_mean: float
    mae: float
    crps: float
    crps_sum: float
    variance: float
    n_windows: int
    n_draws: int
    per_window: pd.DataFrame = field(default_factory=pd.DataFrame, repr=False)

    def __post_init__(self):
        for name in ('mse', 'mse_ensemble', 'mse_mean', 'mae', 'crps', 'crps_sum', 'variance'):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise NumericalError(f"evaluation: {name} = {value} is not a finite nonnegative score")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'MSE': self.mse,
            'MSE_E': self.mse_ensemble,
            'MSE_mean': self.mse_mean,
            'MAE': self.mae,
            'CRPS': self.crps,
            'CRPS_sum': self.crps_sum,
            'Var': self.variance,
            'n_windows': self.n_windows,
            'n_draws': self.n_draws,
        }])

    def to_csv(self, path: str, per_window_path: Optional[str] = None) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.10g')
        if per_window_path is not None:
            self.per_window.to_csv(per_window_path, index=False, float_format='%.10g')

    def summary(self) -> str:
        rows = [[k, v] for k, v in self.to_frame().iloc[0].items()]
        return tabulate(rows, headers=['metric', 'value'], floatfmt='.6g')

    def as_dict(self) -> dict:
        data = asdict(self)
        data.pop('per_window')
        return data


def evaluate_samples(samples: np.ndarray, truth: np.ndarray, mom_config: MoMConfig, single_index: int = 0,
                     origins: Optional[np.ndarray] = None) -> EvalReport:
    """Score window draws (W, N, H, M) against targets (W, H, M).

    MSE uses draw ``single_index``; MSE_E and MAE use the Median-of-Means point
    forecast; MSE_mean uses the plain average of draws.
    """
    samples, truth = np.asarray(samples, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if samples.ndim != 4 or truth.ndim != 3 or samples.shape[0] != truth.shape[0] \
            or samples.shape[2:] != truth.shape[1:]:
        raise ShapeError(f"evaluate: draws {samples.shape} do not match targets {truth.shape}")
    n_windows, n_draws = samples.shape[:2]
    origins = np.arange(n_windows) if origins is None else np.asarray(origins)

    single = np.stack([single_draw(s, single_index) for s in samples])
    median_of_means = np.stack([mom_grid(s, mom_config) for s in samples])
    average = np.stack([mean_ensemble(s) for s in samples])

    axes = (1, 2)
    per_window = pd.DataFrame({
        'window': np.arange(n_windows),
        'origin': origins,
        'mse': ((single - truth) ** 2).mean(axis=axes),
        'mse_ensemble': ((median_of_means - truth) ** 2).mean(axis=axes),
        'mse_mean': ((average - truth) ** 2).mean(axis=axes),
        'mae': np.abs(median_of_means - truth).mean(axis=axes),
        'crps': crps_grid(np.moveaxis(samples, 1, 0), truth).mean(axis=axes),
        'var': samples.var(axis=1).mean(axis=axes),
    })
    report = EvalReport(
        mse=mse(single, truth),
        mse_ensemble=mse(median_of_means, truth),
        mse_mean=mse(average, truth),
        mae=mae(median_of_means, truth),
        crps=normalized_crps(samples, truth),
        crps_sum=crps_sum(samples, truth),
        variance=sample_variance(samples),
        n_windows=n_windows,
        n_draws=n_draws,
        per_window=per_window,
    )
    logger.info(f"Evaluated {n_windows} windows x {n_draws} draws: MSE={report.mse:.4g}, "
                f"MSE_E={report.mse_ensemble:.4g}, CRPS={report.crps:.4g}")
    return report
