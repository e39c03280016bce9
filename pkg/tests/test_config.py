"""Tests for run-file parsing, validation and override precedence."""

import os

import pytest
import yaml

from config import DenoiserConfig, RunConfig, TrainConfig, load_run_config, settings
from utils.exceptions import ConfigurationError


def dump(tmp_path, payload, name='run.yaml'):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(payload))
    return str(path)


class TestSchema:

    def test_defaults_follow_reference_setup(self):
        config = RunConfig()
        assert config.train.K == 100
        assert config.train.lr == 1e-3
        assert config.train.offset == 5.0
        assert config.sampler.n_draws == 100
        assert config.mom.n_groups == 5 and config.mom.n_repeats == 10
        assert config.train.record_wall_time is False

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError, match='Invalid run configuration'):
            load_run_config(dump(tmp_path, {'train': {'learning_rate': 0.1}}), environ={})

    def test_odd_head_dimension_rejected(self):
        with pytest.raises(ValueError, match='divisible'):
            DenoiserConfig(d_model=10, n_heads=2)

    def test_patience_bounded_by_epochs(self):
        with pytest.raises(ValueError, match='patience'):
            TrainConfig(max_epochs=3, patience=5)

    def test_cross_section_checks(self):
        with pytest.raises(ValueError, match='n_groups'):
            RunConfig.model_validate({'sampler': {'n_draws': 3}, 'mom': {'n_groups': 5}})
        with pytest.raises(ValueError, match='patch_len'):
            RunConfig.model_validate({'dataset': {'H': 4}, 'denoiser': {'patch_len': 8, 'stride': 4}})

    def test_seed_derives_component_seeds(self):
        config = RunConfig.model_validate({'seed': 7})
        assert config.train.seed == 7
        assert config.sampler.rng_seed == 8
        assert config.mom.rng_seed == 9

    def test_shipped_configs_parse(self):
        for name in ('tiny', 'etth1', 'ablation_trend'):
            config = load_run_config(f'{_root()}/configs/{name}.yaml', environ={})
            assert config.dataset.L >= config.denoiser.patch_len

    def test_etth1_windows(self):
        config = load_run_config(f'{_root()}/configs/etth1.yaml', environ={})
        assert (config.dataset.L, config.dataset.H) == (336, 168)
        assert tuple(config.dataset.split_counts) == (8137, 2713, 2713)


class TestLoading:

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match='not found'):
            load_run_config(str(tmp_path / 'absent.yaml'), environ={})

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / 'bad.yaml'
        path.write_text('train: [unclosed')
        with pytest.raises(ConfigurationError, match='YAML'):
            load_run_config(str(path), environ={})

    def test_top_level_must_be_mapping(self, tmp_path):
        with pytest.raises(ConfigurationError, match='mapping'):
            load_run_config(dump(tmp_path, [1, 2, 3]), environ={})

    def test_override_precedence(self, tmp_path):
        path = dump(tmp_path, {'seed': 1, 'output_dir': 'from-file'})
        env = {'SIMDIFF_OUTPUT_DIR': 'from-env', 'SIMDIFF_SEED': '2'}

        from_env = load_run_config(path, environ=env)
        assert from_env.output_dir == 'from-env' and from_env.seed == 2

        from_flags = load_run_config(path, output_dir='from-flag', seed=3, environ=env)
        assert from_flags.output_dir == 'from-flag' and from_flags.seed == 3
        assert from_flags.train.seed == 3

        from_file = load_run_config(path, environ={})
        assert from_file.output_dir == 'from-file' and from_file.seed == 1

    def test_bad_seed_env(self, tmp_path):
        with pytest.raises(ConfigurationError, match='SIMDIFF_SEED'):
            load_run_config(dump(tmp_path, {}), environ={'SIMDIFF_SEED': 'seven'})

    def test_process_settings(self):
        assert settings['testing'].LOG_LEVEL == 'WARNING'
        assert settings['default'].SEED_ENV == 'SIMDIFF_SEED'


def _root() -> str:
    return os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
