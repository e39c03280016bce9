"""
Configuration settings for the SimDiff forecaster.

``Settings`` carries process-level options read from the environment (a ``.env``
file is honoured). ``RunConfig`` is the schema of the YAML run files consumed by
the command line; unknown keys are rejected.
"""
import os
from typing import List, Literal, Mapping, Optional, Tuple

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from utils.exceptions import ConfigurationError
from utils.helpers import fingerprint

# Load environment variables from .env file
load_dotenv()


class Settings:
    """Process configuration class."""

    # Logging settings
    LOG_DIR = os.environ.get('LOG_DIR', './logs')
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_MAX_BYTES = int(os.environ.get('LOG_MAX_BYTES', 10 * 1024 * 1024))  # 10MB
    LOG_BACKUP_COUNT = int(os.environ.get('LOG_BACKUP_COUNT', 5))
    LOG_JSON_CONSOLE = os.environ.get('LOG_JSON_CONSOLE', 'False').lower() == 'true'

    # Run overrides (the only values the environment may change in a run file)
    OUTPUT_DIR_ENV = 'SIMDIFF_OUTPUT_DIR'
    SEED_ENV = 'SIMDIFF_SEED'


class DevelopmentSettings(Settings):
    """Development configuration."""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class TestingSettings(Settings):
    """Test configuration."""
    LOG_DIR = os.environ.get('LOG_DIR', './logs/test')
    LOG_LEVEL = 'WARNING'


# Configuration mapping
settings = {
    'development': DevelopmentSettings,
    'testing': TestingSettings,
    'default': Settings
}


# ----------------------------------------------------------------------
# Run configuration schema
# ----------------------------------------------------------------------
class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


class SynthConfig(StrictModel):
    """Sinusoid-plus-drift generator parameters."""
    kind: Literal['trend', 'level-shift', 'scale-shift'] = 'trend'
    T: int = 5000
    M: int = 2
    period: float = 24.0
    amplitude: float = 1.0
    slope: float = 0.002
    break_at: Optional[float] = None
    slope_after: float = 0.0
    shift: float = 2.0
    shift_every: Optional[int] = None
    scale_ramp: float = 2.0
    noise: float = 0.1
    seed: int = 0

    @field_validator('T', 'M')
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError('must be >= 1')
        return v

    @field_validator('period')
    @classmethod
    def _period_positive(cls, v):
        if v <= 0:
            raise ValueError('period must be positive')
        return v

    @field_validator('break_at')
    @classmethod
    def _break_inside(cls, v):
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError(f'break_at must lie strictly between 0 and 1, got {v}')
        return v

    @field_validator('noise')
    @classmethod
    def _noise_nonnegative(cls, v):
        if v < 0:
            raise ValueError('noise must be >= 0')
        return v


class DatasetConfig(StrictModel):
    name: str = 'dataset'
    path: Optional[str] = None
    synthetic: Optional[SynthConfig] = None
    L: int = 96
    H: int = 24
    split_counts: Optional[Tuple[int, int, int]] = None
    split_fractions: Tuple[float, float, float] = (0.7, 0.1, 0.2)
    stride: int = 1
    eval_stride: int = 1

    @field_validator('L', 'H', 'stride', 'eval_stride')
    @classmethod
    def _positive(cls, v):
        if v < 1:
            raise ValueError('must be >= 1')
        return v

    @field_validator('split_fractions')
    @classmethod
    def _fractions(cls, v):
        if any(f <= 0 for f in v) or sum(v) > 1.0 + 1e-9:
            raise ValueError(f'split fractions must be positive and sum to at most 1, got {v}')
        return v

    @field_validator('split_counts')
    @classmethod
    def _counts(cls, v):
        if v is not None and any(c < 1 for c in v):
            raise ValueError(f'split counts must be positive, got {v}')
        return v


class DenoiserConfig(StrictModel):
    patch_len: int = 8
    stride: int = 4
    d_model: int = 128
    n_heads: int = 4
    n_layers: int = 3
    ffn_mult: int = 4
    dropout: float = 0.0
    use_rope: bool = True
    rope_base: float = 10000.0
    time_embedding: Literal['linear', 'sinusoidal', 'mlp'] = 'linear'

    @model_validator(mode='after')
    def _check(self):
        if self.patch_len < 1:
            raise ValueError(f'patch_len must be >= 1, got {self.patch_len}')
        if not 1 <= self.stride <= self.patch_len:
            raise ValueError(f'stride must lie in [1, patch_len], got {self.stride}')
        if self.n_heads < 1 or self.n_layers < 0 or self.ffn_mult < 1:
            raise ValueError('n_heads and ffn_mult must be >= 1, n_layers >= 0')
        if self.d_model % (2 * self.n_heads) != 0:
            raise ValueError(f'd_model ({self.d_model}) must be divisible by 2*n_heads ({2 * self.n_heads})')
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f'dropout must lie in [0, 1), got {self.dropout}')
        return self

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


class TrainConfig(StrictModel):
    lr: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    K: int = 100
    schedule: Literal['cosine', 'linear', 'quadratic'] = 'cosine'
    offset: float = 5.0
    beta_min: float = 1e-4
    beta_max: float = 0.02
    seed: int = 0
    loss_eps: float = 1e-3
    weight_exponent: Literal[-1, 1] = -1
    normalization: Literal['ni', 'shared'] = 'ni'
    batches_per_epoch: Optional[int] = None
    max_val_windows: Optional[int] = 256
    val_steps: int = 3
    record_wall_time: bool = False

    @model_validator(mode='after')
    def _check(self):
        if self.lr <= 0:
            raise ValueError(f'lr must be positive, got {self.lr}')
        if self.K < 1:
            raise ValueError(f'K must be >= 1, got {self.K}')
        if self.max_epochs < 1 or self.patience < 1:
            raise ValueError('max_epochs and patience must be >= 1')
        if self.patience > self.max_epochs:
            raise ValueError(f'patience ({self.patience}) must not exceed max_epochs ({self.max_epochs})')
        if self.batch_size < 1:
            raise ValueError('batch_size must be >= 1')
        if self.loss_eps <= 0:
            raise ValueError('loss_eps must be positive')
        if not 1 <= self.val_steps <= self.K:
            raise ValueError(f'val_steps must lie in [1, K], got {self.val_steps}')
        return self


class ReverseSamplerConfig(StrictModel):
    steps: int = 3
    skip_kind: Literal['time_uniform', 'time_quadratic'] = 'time_uniform'
    stochastic: bool = False
    rng_seed: int = 0
    n_draws: int = 100
    chunk_size: int = 100

    @model_validator(mode='after')
    def _check(self):
        if self.steps < 1 or self.n_draws < 1 or self.chunk_size < 1:
            raise ValueError('steps, n_draws and chunk_size must be >= 1')
        return self


class MoMConfig(StrictModel):
    n_groups: int = 5
    n_repeats: int = 10
    rng_seed: int = 0
    shuffle: bool = True

    @model_validator(mode='after')
    def _check(self):
        if self.n_groups < 1 or self.n_repeats < 1:
            raise ValueError('n_groups and n_repeats must be >= 1')
        return self


class EvalConfig(StrictModel):
    max_windows: Optional[int] = None
    single_index: int = 0


class BenchConfig(StrictModel):
    horizons: List[int] = [96, 192, 336, 720]
    repeats: int = 3


class SensitivityConfig(StrictModel):
    steps: List[int] = [1, 2, 3, 5, 10]
    skip_kinds: List[Literal['time_uniform', 'time_quadratic']] = ['time_uniform', 'time_quadratic']


class AblationConfig(StrictModel):
    seeds: List[int] = [0]


class RunConfig(StrictModel):
    name: str = 'simdiff'
    seed: Optional[int] = None
    output_dir: str = './runs/default'
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    denoiser: DenoiserConfig = Field(default_factory=DenoiserConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sampler: ReverseSamplerConfig = Field(default_factory=ReverseSamplerConfig)
    mom: MoMConfig = Field(default_factory=MoMConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    sensitivity: SensitivityConfig = Field(default_factory=SensitivityConfig)
    ablation: AblationConfig = Field(default_factory=AblationConfig)

    @model_validator(mode='after')
    def _check(self):
        if self.sampler.steps > self.train.K:
            raise ValueError(f'sampler.steps ({self.sampler.steps}) exceeds train.K ({self.train.K})')
        if self.mom.n_groups > self.sampler.n_draws:
            raise ValueError(f'mom.n_groups ({self.mom.n_groups}) exceeds sampler.n_draws ({self.sampler.n_draws})')
        for label, length in (('dataset.L', self.dataset.L), ('dataset.H', self.dataset.H)):
            if length < self.denoiser.patch_len:
                raise ValueError(f'{label} ({length}) is shorter than denoiser.patch_len ({self.denoiser.patch_len})')
        if self.seed is not None:
            self.apply_seed(self.seed)
        return self

    def apply_seed(self, seed: int) -> 'RunConfig':
        """Derive every component seed from one run seed."""
        seed = int(seed)
        self.seed = seed
        self.train.seed = seed
        self.sampler.rng_seed = seed + 1
        self.mom.rng_seed = seed + 2
        self.synth.seed = seed
        if self.dataset.synthetic is not None:
            self.dataset.synthetic.seed = seed
        return self

    def model_fingerprint(self, n_channels: int) -> str:
        """Fingerprint of everything a checkpoint's parameters depend on."""
        return fingerprint({
            'denoiser': self.denoiser.model_dump(),
            'schedule': {k: getattr(self.train, k) for k in ('K', 'schedule', 'offset', 'beta_min', 'beta_max')},
            'normalization': self.train.normalization,
            'n_channels': int(n_channels),
        })


def load_run_config(path: Optional[str] = None, output_dir: Optional[str] = None, seed: Optional[int] = None,
                    environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Parse a YAML run file and apply environment and command-line overrides."""
    environ = os.environ if environ is None else environ
    raw = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigurationError(f"Config file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Config file {path} is not valid YAML: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigurationError(f"Config file {path} must contain a mapping at top level")

    try:
        run_config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid run configuration: {e}") from e

    env_out = environ.get(Settings.OUTPUT_DIR_ENV)
    if env_out:
        run_config.output_dir = env_out
    env_seed = environ.get(Settings.SEED_ENV)
    if env_seed:
        try:
            run_config.apply_seed(int(env_seed))
        except ValueError as e:
            raise ConfigurationError(f"{Settings.SEED_ENV} must be an integer, got {env_seed!r}") from e

    if output_dir is not None:
        run_config.output_dir = output_dir
    if seed is not None:
        run_config.apply_seed(seed)
    return run_config
