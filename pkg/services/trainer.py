"""
Training loop: weighted-MAE denoising objective, Adam and early stopping.
"""
import time
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config import ReverseSamplerConfig, TrainConfig
from diffusion import NoiseSchedule, forward_corrupt_batch
from models.forecaster import SimDiffForecaster
from nn import Adam, Tensor
from utils.exceptions import DataError, NumericalError, ShapeError
from utils.helpers import substream
from utils.logger import log_custom_event

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ['epoch', 'train_loss', 'val_mse', 'lr', 'wall_seconds']


def loss_weights(k: np.ndarray, sched: NoiseSchedule, loss_eps: float = 1e-3,
                 weight_exponent: int = -1) -> np.ndarray:
    """max(sqrt(1 − ᾱ_k), loss_eps) ** weight_exponent per step."""
    scale = np.maximum(np.sqrt(1.0 - sched.alpha_bars[np.asarray(k)]), loss_eps)
    return scale ** weight_exponent


def weighted_mae_loss(y0_hat: Tensor, y0_norm: np.ndarray, k: np.ndarray, sched: NoiseSchedule,
                      loss_eps: float = 1e-3, weight_exponent: int = -1) -> Tensor:
    """Mean of |Y0_norm − Ŷ0| weighted per sample by its diffusion step.

    ``y0_hat`` and ``y0_norm`` are (B, ...); ``k`` is (B,).
    """
    y0_hat = Tensor.lift(y0_hat)
    y0_norm = np.asarray(y0_norm, dtype=np.float64)
    if y0_hat.shape != y0_norm.shape:
        raise ShapeError(f"weighted_mae_loss: prediction shape {y0_hat.shape} != target shape {y0_norm.shape}")
    k = np.broadcast_to(np.asarray(k), (y0_norm.shape[0],))
    weights = loss_weights(k, sched, loss_eps, weight_exponent).reshape((-1,) + (1,) * (y0_norm.ndim - 1))
    return ((y0_hat - y0_norm).abs() * weights).mean()


def sample_steps(rng: np.random.Generator, n: int, K: int) -> np.ndarray:
    """Diffusion steps drawn uniformly from {1, ..., K}."""
    return rng.integers(1, K + 1, size=n)


def train_step(forecaster: SimDiffForecaster, X: np.ndarray, Y: np.ndarray, optimizer: Adam,
               rng: np.random.Generator, config: TrainConfig) -> float:
    """One Adam update on a batch of windows X (B, L, M), Y (B, H, M); returns the loss."""
    if len(X) == 0:
        raise DataError("train_step: empty batch")
    sched = forecaster.schedule
    optimizer.zero_grad()

    x_norm, _ = forecaster.norm.past_tensor(X)
    y_norm = forecaster.norm.targets(X, Y)
    k = sample_steps(rng, len(X), sched.K)
    y_k = forward_corrupt_batch(y_norm, k, rng.standard_normal(y_norm.shape), sched)
    y0_hat = forecaster.denoiser.predict(x_norm, y_k, k, sched.K)

    loss = weighted_mae_loss(y0_hat, y_norm, k, sched, config.loss_eps, config.weight_exponent)
    loss.backward()
    optimizer.step()
    return loss.item()


class EarlyStopping:
    """Tracks the best validation score and keeps a copy of the matching parameters."""

    def __init__(self, patience: int, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = float('inf')
        self.best_epoch = 0
        self.best_state: Optional[Dict[str, np.ndarray]] = None
        self.wait = 0
        self.stopped_epoch: Optional[int] = None

    def __call__(self, epoch: int, current: float, snapshot: Callable[[], Dict[str, np.ndarray]]) -> bool:
        """Record ``current``; returns True when training should stop."""
        if current < self.best - self.min_delta:
            self.best = current
            self.best_epoch = epoch
            self.best_state = snapshot()
            self.wait = 0
            return False
        self.wait += 1
        if self.wait >= self.patience:
            self.stopped_epoch = epoch
            return True
        return False


@dataclass
class FitResult:
    history: pd.DataFrame
    best_epoch: int
    best_val_mse: float
    stopped_early: bool

    def history_csv(self, path: str) -> None:
        self.history.to_csv(path, index=False, float_format='%.17g')


def validation_mse(forecaster: SimDiffForecaster, X: np.ndarray, Y: np.ndarray,
                   sampler_config: ReverseSamplerConfig, batch_size: int = 256) -> float:
    """MSE of one deterministic strided draw per window, in the original scale."""
    total, count = 0.0, 0
    for start in range(0, len(X), batch_size):
        stop = min(start + batch_size, len(X))
        draws = forecaster.forecast_windows(X[start:stop], 1, sampler_config,
                                            streams=range(start, stop), horizon=Y.shape[1])[:, 0]
        total += float(((draws - Y[start:stop]) ** 2).sum())
        count += draws.size
    return total / count


def fit(forecaster: SimDiffForecaster, train: Tuple[np.ndarray, np.ndarray], val: Tuple[np.ndarray, np.ndarray],
        config: TrainConfig, verbose: bool = False) -> FitResult:
    """Train until ``max_epochs`` or early stop, then restore the best-validation parameters."""
    X_train, Y_train = (np.asarray(a, dtype=np.float64) for a in train)
    X_val, Y_val = (np.asarray(a, dtype=np.float64) for a in val)
    if len(X_train) == 0:
        raise DataError("fit: training split produced no windows")
    if len(X_val) == 0:
        raise DataError("fit: validation split produced no windows")

    optimizer = Adam(forecaster.parameters(), lr=config.lr)
    rng = substream(config.seed, 1)
    val_sampler = ReverseSamplerConfig(steps=min(config.val_steps, config.K), stochastic=False,
                                       rng_seed=config.seed, n_draws=1, chunk_size=256)
    stopper = EarlyStopping(config.patience)
    rows: List[dict] = []

    n_batches = int(np.ceil(len(X_train) / config.batch_size))
    if config.batches_per_epoch is not None:
        n_batches = min(n_batches, config.batches_per_epoch)
    logger.info(f"Training on {len(X_train)} windows ({n_batches} batches/epoch), "
                f"validating on {len(X_val)} windows")

    epochs = tqdm(range(1, config.max_epochs + 1), desc='epochs', disable=not verbose)
    for epoch in epochs:
        started = time.perf_counter()
        order = rng.permutation(len(X_train))
        forecaster.train()
        losses = []
        for b in range(n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            try:
                losses.append(train_step(forecaster, X_train[idx], Y_train[idx], optimizer, rng, config))
            except NumericalError as e:
                log_custom_event('training_nan', f"Non-finite value in epoch {epoch}, batch {b}: {e}",
                                 {'epoch': epoch, 'batch': b, 'error_message': str(e)})
                raise NumericalError(f"epoch {epoch}, batch {b}: {e}") from e
        forecaster.eval()
        val_mse = validation_mse(forecaster, X_val, Y_val, val_sampler)
        wall = time.perf_counter() - started if config.record_wall_time else 0.0

        row = {'epoch': epoch, 'train_loss': float(np.mean(losses)), 'val_mse': val_mse,
               'lr': config.lr, 'wall_seconds': wall}
        rows.append(row)
        epochs.set_postfix(loss=f"{row['train_loss']:.4f}", val=f"{val_mse:.4f}")
        log_custom_event('epoch_finished', f"Epoch {epoch}: loss {row['train_loss']:.5f}, val_mse {val_mse:.5f}",
                         row)

        if stopper(epoch, val_mse, forecaster.state_dict):
            log_custom_event('early_stop', f"Early stopping at epoch {epoch} (best epoch {stopper.best_epoch})",
                             {'epoch': epoch, 'best_epoch': stopper.best_epoch, 'best_val_mse': stopper.best})
            logger.info(f"Early stopping at epoch {epoch}; best epoch {stopper.best_epoch}")
            break

    if stopper.best_state is not None:
        forecaster.load_state_dict(stopper.best_state)
    forecaster.eval()
    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    return FitResult(history=history, best_epoch=stopper.best_epoch, best_val_mse=stopper.best,
                     stopped_early=stopper.stopped_epoch is not None)
