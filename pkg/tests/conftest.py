"""
Shared fixtures: tiny run configurations, datasets, a briefly trained model and the CLI.
"""

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from config import RunConfig
from data import load_dataset, window_arrays
from models.forecaster import SimDiffForecaster
from services.trainer import fit


def tiny_config_dict(output_dir: str) -> dict:
    return {
        'name': 'tiny',
        'seed': 0,
        'output_dir': str(output_dir),
        'dataset': {
            'name': 'synth-trend',
            'L': 32,
            'H': 16,
            'synthetic': {'kind': 'trend', 'T': 600, 'M': 2, 'period': 16.0, 'slope': 0.01, 'noise': 0.05},
        },
        'denoiser': {'patch_len': 8, 'stride': 4, 'd_model': 16, 'n_heads': 2, 'n_layers': 1},
        'train': {'lr': 0.003, 'max_epochs': 2, 'patience': 2, 'batch_size': 16, 'K': 20,
                  'batches_per_epoch': 3, 'max_val_windows': 8},
        'sampler': {'steps': 3, 'n_draws': 6},
        'mom': {'n_groups': 3, 'n_repeats': 2},
        'evaluation': {'max_windows': 4},
        'bench': {'horizons': [16, 32], 'repeats': 1},
        'sensitivity': {'steps': [1, 2]},
        'ablation': {'seeds': [0]},
    }


@pytest.fixture
def tiny_config(tmp_path) -> RunConfig:
    return RunConfig.model_validate(tiny_config_dict(tmp_path / 'run'))


@pytest.fixture
def tiny_config_file(tmp_path) -> str:
    path = tmp_path / 'tiny.yaml'
    with open(path, 'w') as f:
        yaml.safe_dump(tiny_config_dict(tmp_path / 'run'), f)
    return str(path)


@pytest.fixture
def tiny_dataset(tiny_config):
    return load_dataset(tiny_config.dataset)


@pytest.fixture(scope='module')
def trained_forecaster(tmp_path_factory):
    """A forecaster after one short epoch on the tiny synthetic series."""
    config = RunConfig.model_validate(tiny_config_dict(tmp_path_factory.mktemp('trained')))
    config.train.max_epochs = 1
    config.train.patience = 1
    dataset = load_dataset(config.dataset)
    train = window_arrays(dataset, 'train', 4)[:2]
    val = window_arrays(dataset, 'val', 1, limit=8)[:2]
    forecaster = SimDiffForecaster(config.denoiser, config.train, dataset.n_channels)
    forecaster.horizon = dataset.H
    fit(forecaster, train, val, config.train)
    return forecaster, dataset, config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cli(tmp_path, monkeypatch):
    """The command group with logs under a temporary directory and no env overrides."""
    from app_factory import create_app
    monkeypatch.delenv('SIMDIFF_OUTPUT_DIR', raising=False)
    monkeypatch.delenv('SIMDIFF_SEED', raising=False)
    app = create_app('testing', log_dir=str(tmp_path / 'logs'))
    yield app
    app.run_logger.close()


@pytest.fixture
def runner():
    return CliRunner()


def read_bytes(path) -> bytes:
    with open(path, 'rb') as f:
        return f.read()


@pytest.fixture
def read_file():
    return read_bytes


@pytest.fixture(autouse=True)
def _isolate_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
