"""
Dataset ingestion, chronological splitting and sliding-window extraction.
"""
import os
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from config import DatasetConfig
from utils.exceptions import ConfigurationError, DataError

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')
TIMESTAMP_HEADERS = {'date', 'time', 'timestamp', 'datetime'}


@dataclass
class SeriesWindow:
    """Past block X (L×M) immediately followed by the future block Y (H×M)."""
    X: np.ndarray
    Y: np.ndarray
    origin: int


@dataclass
class Dataset:
    """T×M series plus its contiguous (train, val, test) split sizes."""
    name: str
    values: np.ndarray
    splits: Tuple[int, int, int]
    L: int
    H: int
    columns: List[str] = field(default_factory=list)
    timestamps: Optional[np.ndarray] = None
    drift: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size == 0:
            raise DataError(f"dataset {self.name!r}: expected a non-empty T×M matrix, got shape {self.values.shape}")
        if sum(self.splits) > self.n_steps:
            raise DataError(f"dataset {self.name!r}: split sizes {self.splits} exceed series length {self.n_steps}")
        if not self.columns:
            self.columns = [f'ch{m}' for m in range(self.n_channels)]

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def split_bounds(self) -> Dict[str, Tuple[int, int]]:
        """Half-open [start, stop) ranges of the three chronological splits."""
        bounds, start = {}, 0
        for name, size in zip(SPLITS, self.splits):
            bounds[name] = (start, start + size)
            start += size
        return bounds

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of {SPLITS}")
        start, stop = self.split_bounds()[name]
        return self.values[start:stop]


# ----------------------------------------------------------------------
# CSV ingestion
# ----------------------------------------------------------------------
def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except (TypeError, ValueError):
        return False


def read_csv_matrix(path: str) -> Tuple[np.ndarray, List[str], Optional[np.ndarray]]:
    """Parse a header-led CSV into (values, channel names, timestamps).

    The first column is treated as a timestamp when its header is a usual time
    name or its first value is not numeric.
    Errors name 1-based data rows, counted below the header with blank lines skipped.
    """
    if not os.path.isfile(path):
        raise DataError(f"Dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, index_col=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: file is empty") from None
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: ragged rows ({e})") from None

    if frame.shape[1] == 0 or frame.shape[0] == 0:
        raise DataError(f"{path}: no data rows below the header")

    timestamps = None
    first = str(frame.columns[0]).strip().lower()
    if first in TIMESTAMP_HEADERS or not _is_number(frame.iloc[0, 0]):
        timestamps = frame.iloc[:, 0].to_numpy()
        frame = frame.iloc[:, 1:]
        if frame.shape[1] == 0:
            raise DataError(f"{path}: no numeric channel columns after the timestamp column")

    values = np.empty(frame.shape, dtype=np.float64)
    for j, column in enumerate(frame.columns):
        raw = frame[column]
        missing = raw.isna() | (raw.astype(str).str.strip() == '')
        if missing.any():
            row = int(np.flatnonzero(missing.to_numpy())[0])
            raise DataError(f"{path}: data row {row + 1}: missing value in column {column!r} (ragged row?)")
        parsed = pd.to_numeric(raw, errors='coerce')
        bad = parsed.isna().to_numpy()
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataError(f"{path}: data row {row + 1}: non-numeric value {raw.iloc[row]!r} in column {column!r}")
        values[:, j] = parsed.to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        row = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
        raise DataError(f"{path}: data row {row + 1}: non-finite value")
    return values, [str(c) for c in frame.columns], timestamps


def resolve_splits(T: int, split_counts: Optional[Sequence[int]] = None,
                   split_fractions: Sequence[float] = (0.7, 0.1, 0.2)) -> Tuple[int, int, int]:
    """Split sizes from explicit counts or from fractions of T (test takes the rest when fractions sum to 1)."""
    if split_counts is not None:
        counts = tuple(int(c) for c in split_counts)
        if sum(counts) > T:
            raise DataError(f"split counts {counts} need {sum(counts)} points, series has {T}")
        return counts
    train = int(T * split_fractions[0])
    val = int(T * split_fractions[1])
    if abs(sum(split_fractions) - 1.0) < 1e-9:
        test = T - train - val
    else:
        test = int(T * split_fractions[2])
    return train, val, test


def load_csv(path: str, L: int = 96, H: int = 24, split_counts: Optional[Sequence[int]] = None,
             split_fractions: Sequence[float] = (0.7, 0.1, 0.2), name: Optional[str] = None) -> Dataset:
    values, columns, timestamps = read_csv_matrix(path)
    splits = resolve_splits(values.shape[0], split_counts, split_fractions)
    dataset = Dataset(name=name or os.path.splitext(os.path.basename(path))[0], values=values, splits=splits,
                      L=L, H=H, columns=columns, timestamps=timestamps)
    logger.info(f"Loaded {path}: T={dataset.n_steps}, M={dataset.n_channels}, splits={splits}")
    return dataset


def load_dataset(config: DatasetConfig) -> Dataset:
    """Dataset described by a run configuration section (CSV path or synthetic generator)."""
    if config.path:
        return load_csv(config.path, config.L, config.H, config.split_counts, config.split_fractions, config.name)
    if config.synthetic is not None:
        from data.synthetic import synth_from_config
        return synth_from_config(config.synthetic, config)
    raise ConfigurationError("dataset section needs either 'path' or 'synthetic'")


# ----------------------------------------------------------------------
# windows
# ----------------------------------------------------------------------
def _window_origins(dataset: Dataset, split: str, stride: int) -> np.ndarray:
    start, stop = dataset.split_bounds()[split]
    span = dataset.L + dataset.H
    if stop - start < span:
        raise DataError(f"{dataset.name}: {split} split has {stop - start} points, "
                        f"needs at least L + H = {span}")
    return np.arange(start, stop - span + 1, stride)


def window_count(split_len: int, L: int, H: int, stride: int = 1) -> int:
    return max(0, (split_len - L - H) // stride + 1)


def windows(dataset: Dataset, split: str, stride: int = 1) -> List[SeriesWindow]:
    """Sliding windows lying fully inside ``split``; origin is the absolute index of X's first row."""
    L = dataset.L
    return [SeriesWindow(X=dataset.values[o:o + L], Y=dataset.values[o + L:o + L + dataset.H], origin=int(o))
            for o in _window_origins(dataset, split, stride)]


def window_arrays(dataset: Dataset, split: str, stride: int = 1,
                  limit: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked windows of ``split`` as (X (W, L, M), Y (W, H, M), origins (W,)).

    ``limit`` keeps an evenly spaced subset of at most that many windows.
    """
    origins = _window_origins(dataset, split, stride)
    if limit is not None and len(origins) > limit:
        origins = origins[evenly_spaced(len(origins), limit)]
    start = dataset.split_bounds()[split][0]
    span = dataset.L + dataset.H
    # (n, M, span) view over the split, one row per start offset
    view = sliding_window_view(dataset.split(split), span, axis=0)
    blocks = view[origins - start].transpose(0, 2, 1)
    return (np.ascontiguousarray(blocks[:, :dataset.L]), np.ascontiguousarray(blocks[:, dataset.L:]),
            origins.astype(int))


def evenly_spaced(n: int, k: int) -> np.ndarray:
    """``k`` distinct indices spread over range(n)."""
    if k >= n:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, k).round().astype(int))


def future_origin(dataset: Dataset) -> int:
    """Origin of the window whose past block ends at the last observation."""
    if dataset.n_steps < dataset.L:
        raise DataError(f"{dataset.name}: series shorter than L={dataset.L}")
    return dataset.n_steps - dataset.L
