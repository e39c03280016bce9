"""End-to-end tests of the command-line verbs on the tiny synthetic run."""

import json
import os

import pandas as pd
import pytest
import yaml

from main import main
from conftest import tiny_config_dict
from utils.exceptions import NumericalError, ShapeError


def write_config(tmp_path, name='run.yaml', **sections):
    payload = tiny_config_dict(tmp_path / 'run')
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(payload.get(key), dict):
            payload[key] = {**payload[key], **value}
        else:
            payload[key] = value
    path = tmp_path / name
    path.write_text(yaml.safe_dump(payload))
    return str(path)


def invoke(runner, cli, *args):
    return runner.invoke(cli, list(args), catch_exceptions=False)


@pytest.fixture
def trained(cli, runner, tiny_config_file, tmp_path):
    """Output directory of a finished tiny training run."""
    result = invoke(runner, cli, 'train', '--config', tiny_config_file)
    assert result.exit_code == 0, result.output
    return tmp_path / 'run'


class TestArtifacts:

    def test_schedule(self, cli, runner, tiny_config_file, tmp_path):
        result = invoke(runner, cli, 'schedule', '--config', tiny_config_file)
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(tmp_path / 'run' / 'schedule.csv')
        assert list(frame.columns) == ['k', 'beta', 'alpha_bar', 'sigma']
        assert len(frame) == 20

    def test_synth(self, cli, runner, tiny_config_file, tmp_path):
        result = invoke(runner, cli, 'synth', '--config', tiny_config_file)
        assert result.exit_code == 0, result.output
        data = pd.read_csv(tmp_path / 'run' / 'synth.csv')
        assert data.shape == (600, 3)
        truth = pd.read_csv(tmp_path / 'run' / 'synth_truth.csv')
        assert 'window_mean_shift' in truth['key'].tolist()

    def test_train_writes_checkpoint_and_history(self, trained):
        assert (trained / 'model.ckpt').is_file()
        history = pd.read_csv(trained / 'history.csv')
        assert list(history.columns) == ['epoch', 'train_loss', 'val_mse', 'lr', 'wall_seconds']
        assert len(history) >= 1

    def test_forecast(self, cli, runner, tiny_config_file, trained):
        result = invoke(runner, cli, 'forecast', '--config', tiny_config_file)
        assert result.exit_code == 0, result.output
        samples = pd.read_csv(trained / 'samples.csv')
        assert len(samples) == 16 * 2 * 6
        point = pd.read_csv(trained / 'point.csv')
        assert list(point.columns) == ['t', 'channel', 'mom', 'mean', 'single']
        assert len(point) == 16 * 2

    def test_evaluate(self, cli, runner, tiny_config_file, trained, read_file):
        result = invoke(runner, cli, 'evaluate', '--config', tiny_config_file)
        assert result.exit_code == 0, result.output
        report = pd.read_csv(trained / 'report.csv')
        assert {'MSE', 'MSE_E', 'Var', 'CRPS', 'CRPS_sum'} <= set(report.columns)
        assert report['n_windows'].iloc[0] == 4
        assert len(pd.read_csv(trained / 'report_windows.csv')) == 4

        first = read_file(trained / 'report.csv')
        invoke(runner, cli, 'evaluate', '--config', tiny_config_file)
        assert read_file(trained / 'report.csv') == first

    def test_sensitivity(self, cli, runner, tiny_config_file, trained):
        result = invoke(runner, cli, 'sensitivity', '--config', tiny_config_file)
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(trained / 'sensitivity.csv')
        assert len(frame) == 4
        assert set(frame['skip_kind']) == {'time_uniform', 'time_quadratic'}

    def test_bench(self, cli, runner, tiny_config_file, trained):
        result = invoke(runner, cli, 'bench', '--config', tiny_config_file, '--verbose')
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(trained / 'bench.csv')
        assert frame['horizon'].tolist() == [16, 32]
        assert frame['n_tokens'].iloc[1] > frame['n_tokens'].iloc[0]
        assert {'step_1_ms', 'step_2_ms', 'step_3_ms'} <= set(frame.columns)

    def test_ablate_ni(self, cli, runner, tiny_config_file, tmp_path):
        result = invoke(runner, cli, 'ablate-ni', '--config', tiny_config_file)
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(tmp_path / 'run' / 'ablate_ni.csv')
        assert len(frame) == 2
        assert frame['ni'].tolist() == [True, False]
        assert frame['seed'].tolist() == [0, 0]

    def test_command_is_logged(self, cli, runner, tiny_config_file, tmp_path):
        invoke(runner, cli, 'schedule', '--config', tiny_config_file)
        lines = (tmp_path / 'logs' / 'runs.log').read_text().splitlines()
        records = [json.loads(line) for line in lines if line.startswith('{')]
        assert any(r.get('command') == 'schedule' and r.get('status') == 'success' for r in records)


class TestDeterminism:

    def test_training_history_is_reproducible(self, cli, runner, tiny_config_file, tmp_path, read_file):
        for out in ('a', 'b'):
            result = invoke(runner, cli, 'train', '--config', tiny_config_file, '--out', str(tmp_path / out))
            assert result.exit_code == 0, result.output
        assert read_file(tmp_path / 'a' / 'history.csv') == read_file(tmp_path / 'b' / 'history.csv')

    def test_shipped_config_is_reproducible(self, cli, runner, tmp_path, read_file):
        config = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs', 'tiny.yaml')
        for out in ('a', 'b'):
            for verb in ('train', 'forecast'):
                result = invoke(runner, cli, verb, '--config', config, '--out', str(tmp_path / out))
                assert result.exit_code == 0, result.output
        for name in ('history.csv', 'samples.csv', 'point.csv'):
            assert read_file(tmp_path / 'a' / name) == read_file(tmp_path / 'b' / name), name

    def test_seed_flag_changes_run(self, cli, runner, tiny_config_file, tmp_path, read_file):
        invoke(runner, cli, 'synth', '--config', tiny_config_file, '--out', str(tmp_path / 'a'))
        invoke(runner, cli, 'synth', '--config', tiny_config_file, '--out', str(tmp_path / 'b'), '--seed', '5')
        assert read_file(tmp_path / 'a' / 'synth.csv') != read_file(tmp_path / 'b' / 'synth.csv')


class TestExitCodes:

    def test_missing_dataset_path(self, cli, runner, tmp_path):
        config = write_config(tmp_path, dataset={'synthetic': None, 'path': str(tmp_path / 'absent.csv')})
        result = invoke(runner, cli, 'train', '--config', config)
        assert result.exit_code == 2
        assert 'not found' in result.output

    def test_unknown_config_key(self, cli, runner, tmp_path):
        config = write_config(tmp_path, train={'learning_rate': 0.1})
        assert invoke(runner, cli, 'train', '--config', config).exit_code == 2

    def test_missing_config_file(self, cli, runner, tmp_path):
        assert invoke(runner, cli, 'schedule', '--config', str(tmp_path / 'absent.yaml')).exit_code == 2

    def test_numerical_failure(self, cli, runner, tiny_config_file, monkeypatch):
        def diverge(*args, **kwargs):
            raise NumericalError('loss became NaN')
        monkeypatch.setattr('services.command_handlers.fit', diverge)
        result = invoke(runner, cli, 'train', '--config', tiny_config_file)
        assert result.exit_code == 3
        assert 'NaN' in result.output

    def test_shape_failure(self, cli, runner, tiny_config_file, monkeypatch):
        def mismatch(*args, **kwargs):
            raise ShapeError('matmul: (4, 3) @ (2, 5)')
        monkeypatch.setattr('services.command_handlers.fit', mismatch)
        result = invoke(runner, cli, 'train', '--config', tiny_config_file)
        assert result.exit_code == 2
        assert 'matmul' in result.output

    def test_missing_checkpoint(self, cli, runner, tiny_config_file):
        result = invoke(runner, cli, 'evaluate', '--config', tiny_config_file)
        assert result.exit_code == 4
        assert 'Checkpoint not found' in result.output

    def test_checkpoint_config_mismatch(self, cli, runner, tmp_path, trained):
        config = write_config(tmp_path, 'wider.yaml', denoiser={'d_model': 32})
        result = invoke(runner, cli, 'evaluate', '--config', config)
        assert result.exit_code == 4
        assert 'does not match' in result.output


class TestMain:

    def test_success(self, tiny_config_file):
        assert main(['schedule', '--config', tiny_config_file]) == 0

    def test_error_exit_code(self, tmp_path):
        assert main(['schedule', '--config', str(tmp_path / 'absent.yaml')]) == 2
