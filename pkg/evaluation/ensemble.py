"""
Point forecasts from probabilistic draws: Median-of-Means, mean and single draw.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from config import MoMConfig
from utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def group_sizes(n: int, n_groups: int) -> np.ndarray:
    """Sizes of ``n_groups`` blocks covering n items; the first n mod G blocks take one extra."""
    sizes = np.full(n_groups, n // n_groups)
    sizes[:n % n_groups] += 1
    return sizes


def _group_means(ordered: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    sums = np.add.reduceat(ordered, starts, axis=0)
    return sums / sizes.reshape((-1,) + (1,) * (ordered.ndim - 1))


def mom_grid(samples: np.ndarray, cfg: MoMConfig) -> np.ndarray:
    """Median-of-Means over the leading draw axis, independently per cell.

    Each repeat draws one permutation of the draws and applies it to every cell.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0] if samples.ndim else 0
    if n < cfg.n_groups:
        raise ConfigurationError(f"median of means: {n} draws cannot fill {cfg.n_groups} groups")
    sizes = group_sizes(n, cfg.n_groups)
    rng = np.random.default_rng(cfg.rng_seed)
    total = np.zeros(samples.shape[1:])
    for _ in range(cfg.n_repeats):
        perm = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total += np.median(_group_means(samples[perm], sizes), axis=0)
    return total / cfg.n_repeats


def mom(samples: np.ndarray, cfg: MoMConfig) -> float:
    """Median-of-Means of a 1-D sample."""
    return float(mom_grid(np.asarray(samples, dtype=np.float64).reshape(-1), cfg))


def mean_ensemble(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 1:
        raise ValueError("mean ensemble needs at least one draw")
    return samples.mean(axis=0)


def single_draw(samples: np.ndarray, index: int = 0) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if not -samples.shape[0] <= index < samples.shape[0]:
        raise ValueError(f"draw index {index} out of range for {samples.shape[0]} draws")
    return samples[index]


@dataclass
class ConcentrationCheck:
    """Empirical exceedance probability of the MoM estimate next to its analytic bound."""
    n: int
    n_groups: int
    epsilon: float
    sigma: float
    trials: int
    empirical: float
    bound: float
    std_error: float
    vacuous: bool

    def holds(self, n_std: float = 3.0) -> bool:
        return self.empirical <= self.bound + n_std * self.std_error


def concentration_bound(n: int, n_groups: int, epsilon: float, sigma: float) -> float:
    """exp(−2G(1/2 − Gσ²/(nε²))²), or 1 when the ratio reaches 1/2."""
    ratio = n_groups * sigma ** 2 / (n * epsilon ** 2)
    if ratio >= 0.5:
        return 1.0
    return float(np.exp(-2.0 * n_groups * (0.5 - ratio) ** 2))


def check_concentration_bound(sampler: Callable[[np.random.Generator, tuple], np.ndarray], n: int, n_groups: int,
                              epsilon: float, trials: int, mu0: float = 0.0, sigma: Optional[float] = None,
                              seed: int = 0, chunk: int = 1000) -> ConcentrationCheck:
    """Monte-Carlo estimate of P(|MoM − μ₀| > ε) against the analytic bound.

    ``sampler(rng, shape)`` returns i.i.d. draws; ``sigma`` defaults to the pooled
    sample standard deviation.
    """
    if not 1 <= n_groups <= n:
        raise ConfigurationError(f"concentration check: need 1 <= G <= n, got G={n_groups}, n={n}")
    rng = np.random.default_rng(seed)
    sizes = group_sizes(n, n_groups)
    exceed, pooled_sq, pooled_sum = 0, 0.0, 0.0
    for start in range(0, trials, chunk):
        batch = sampler(rng, (min(chunk, trials - start), n))
        means = _group_means(batch.T, sizes)
        exceed += int(np.sum(np.abs(np.median(means, axis=0) - mu0) > epsilon))
        pooled_sum += float(batch.sum())
        pooled_sq += float((batch ** 2).sum())
    if sigma is None:
        count = trials * n
        sigma = float(np.sqrt(max(pooled_sq / count - (pooled_sum / count) ** 2, 0.0)))

    empirical = exceed / trials
    ratio = n_groups * sigma ** 2 / (n * epsilon ** 2)
    vacuous = ratio >= 0.5
    if vacuous:
        logger.warning(f"concentration bound is vacuous for n={n}, G={n_groups}, eps={epsilon} "
                       f"(G*sigma^2/(n*eps^2) = {ratio:.3f} >= 1/2)")
    return ConcentrationCheck(n=n, n_groups=n_groups, epsilon=epsilon, sigma=sigma, trials=trials,
                              empirical=empirical, bound=concentration_bound(n, n_groups, epsilon, sigma),
                              std_error=float(np.sqrt(max(empirical * (1 - empirical), 1e-12) / trials)),
                              vacuous=vacuous)
