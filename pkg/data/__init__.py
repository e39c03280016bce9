"""
Dataset loading, windowing and synthetic drift series.
"""
from .dataset import (Dataset, SeriesWindow, load_csv, load_dataset, read_csv_matrix, resolve_splits,
                      window_arrays, window_count, windows, evenly_spaced, future_origin)
from .synthetic import synth_drift, synth_from_config, expected_mean_shift, dataset_frame, truth_frame

__all__ = ['Dataset', 'SeriesWindow', 'load_csv', 'load_dataset', 'read_csv_matrix', 'resolve_splits',
           'window_arrays', 'window_count', 'windows', 'evenly_spaced', 'future_origin', 'synth_drift',
           'synth_from_config', 'expected_mean_shift', 'dataset_frame', 'truth_frame']
