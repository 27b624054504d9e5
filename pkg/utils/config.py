"""
Pipeline configuration

A PipelineConfig is read from a flat file of dotted keys (``wilson.threshold=0.0001``),
overridden by ``CTDR_*`` environment variables and finally by command-line flags.
Defaults reproduce the reference run.
"""
import os
from datetime import date
from typing import Dict, List, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from models.errors import ConfigError

ENV_PREFIX = 'CTDR_'


def _split_list(value):
    if value is None:
        return []
    if isinstance(value, str):
        return [item.strip() for item in value.split(',') if item.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class IngestSettings(_Section):
    input_paths: List[str] = Field(default_factory=list)
    cutoff: date = date(2025, 9, 1)

    @field_validator('input_paths', mode='before')
    @classmethod
    def _split_paths(cls, value):
        return _split_list(value)


class LabelingSettings(_Section):
    term_list: str = 'data/dosing_terms_sample.tsv'
    min_similarity: float = Field(0.90, gt=0, le=1)


class WilsonSettings(_Section):
    confidence: float = Field(0.95, gt=0, lt=1)
    threshold: float = Field(0.0001, gt=0, lt=1)


class SplitSettings(_Section):
    train_fraction: float = Field(0.70, ge=0, le=1)
    val_fraction: float = Field(0.15, ge=0, le=1)
    test_fraction: float = Field(0.15, ge=0, le=1)

    @model_validator(mode='after')
    def _fractions_sum_to_one(self):
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f'split fractions sum to {total}, expected 1')
        return self

    def fractions(self):
        return (self.train_fraction, self.val_fraction, self.test_fraction)


class FeatureSettings(_Section):
    hash_dim: int = 2 ** 18
    ngram_max: int = Field(2, ge=1)

    @field_validator('hash_dim')
    @classmethod
    def _power_of_two(cls, value):
        if value < 2 or value & (value - 1):
            raise ValueError('hash_dim must be a power of two')
        return value


class ModelSettings(_Section):
    search_trials: int = Field(200, ge=1)
    seed: int = 0


class SearchSettings(_Section):
    """Bounds of the boosted-tree hyperparameter search."""
    n_estimators_min: int = Field(100, ge=1)
    n_estimators_max: int = Field(1000, ge=1)
    max_depth_min: int = Field(3, ge=1)
    max_depth_max: int = Field(12, ge=1)
    learning_rate_min: float = Field(1e-3, gt=0)
    learning_rate_max: float = Field(0.3, gt=0)
    subsample_min: float = Field(0.5, gt=0, le=1)
    subsample_max: float = Field(1.0, gt=0, le=1)
    colsample_bytree_min: float = Field(0.5, gt=0, le=1)
    colsample_bytree_max: float = Field(1.0, gt=0, le=1)
    gamma_min: float = Field(0.0, ge=0)
    gamma_max: float = Field(5.0, ge=0)
    min_child_weight_min: float = Field(1.0, ge=0)
    min_child_weight_max: float = Field(10.0, ge=0)
    max_delta_step_min: float = Field(0.0, ge=0)
    max_delta_step_max: float = Field(10.0, ge=0)
    reg_alpha_min: float = Field(1e-8, gt=0)
    reg_alpha_max: float = Field(10.0, gt=0)
    reg_lambda_min: float = Field(1e-8, gt=0)
    reg_lambda_max: float = Field(10.0, gt=0)
    scale_pos_weight_low: float = Field(0.5, gt=0)
    scale_pos_weight_high: float = Field(2.0, gt=0)

    @model_validator(mode='after')
    def _ordered_bounds(self):
        names = ['n_estimators', 'max_depth', 'learning_rate', 'subsample', 'colsample_bytree',
                 'gamma', 'min_child_weight', 'max_delta_step', 'reg_alpha', 'reg_lambda']
        for name in names:
            if getattr(self, f'{name}_min') > getattr(self, f'{name}_max'):
                raise ValueError(f'search.{name}_min exceeds search.{name}_max')
        if self.scale_pos_weight_low > self.scale_pos_weight_high:
            raise ValueError('search.scale_pos_weight_low exceeds search.scale_pos_weight_high')
        return self


class TextSettings(_Section):
    l2: float = Field(1e-3, ge=0)
    class_weight_pos: Optional[float] = Field(None, gt=0)  # None: #neg/#pos of the training split
    max_iters: int = Field(500, ge=1)
    tol: float = Field(1e-6, gt=0)


class CalibrationSettings(_Section):
    tabular: str = 'isotonic'
    text: str = 'platt'
    fusion: str = 'platt'

    @field_validator('tabular', 'text', 'fusion')
    @classmethod
    def _known_method(cls, value):
        if value not in ('platt', 'isotonic'):
            raise ValueError(f'unknown calibration method {value!r}')
        return value


class FusionSettings(_Section):
    grid_step: float = Field(0.001, gt=0, le=0.5)


class StratifySettings(_Section):
    boundaries: List[float] = Field(default_factory=lambda: [0.02, 0.05, 0.10])

    @field_validator('boundaries', mode='before')
    @classmethod
    def _split_boundaries(cls, value):
        return _split_list(value)

    @field_validator('boundaries')
    @classmethod
    def _three_increasing(cls, value):
        if len(value) != 3 or not all(0 < a < b < 1 for a, b in zip(value, value[1:])):
            raise ValueError('stratify.boundaries needs three increasing values in (0, 1)')
        return value


class OutputSettings(_Section):
    dir: str = 'runs/default'


class PipelineConfig(_Section):
    """Complete configuration of a pipeline run."""
    ingest: IngestSettings = Field(default_factory=IngestSettings)
    labeling: LabelingSettings = Field(default_factory=LabelingSettings)
    wilson: WilsonSettings = Field(default_factory=WilsonSettings)
    split: SplitSettings = Field(default_factory=SplitSettings)
    features: FeatureSettings = Field(default_factory=FeatureSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    search: SearchSettings = Field(default_factory=SearchSettings)
    text: TextSettings = Field(default_factory=TextSettings)
    calibration: CalibrationSettings = Field(default_factory=CalibrationSettings)
    fusion: FusionSettings = Field(default_factory=FusionSettings)
    stratify: StratifySettings = Field(default_factory=StratifySettings)
    output: OutputSettings = Field(default_factory=OutputSettings)


def flatten_config(config: PipelineConfig) -> Dict[str, str]:
    """Render a config as dotted keys with string values, in declaration order."""
    flat = {}
    for section, values in config.model_dump(mode='json').items():
        for key, value in values.items():
            if isinstance(value, list):
                value = ','.join(str(item) for item in value)
            elif value is None:
                value = ''
            flat[f'{section}.{key}'] = str(value)
    return flat


def _nest(flat: Mapping[str, Optional[str]]) -> Dict[str, Dict[str, Optional[str]]]:
    nested: Dict[str, Dict[str, Optional[str]]] = {}
    for key, value in flat.items():
        if key.count('.') != 1:
            raise ConfigError(f'config key {key!r} is not of the form section.name')
        section, name = key.split('.')
        if value == '':
            value = None
        nested.setdefault(section, {})[name] = value
    return nested


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """Collect CTDR_SECTION__NAME variables as dotted keys."""
    environ = os.environ if environ is None else environ
    overrides = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace('__', '.')
            overrides[key] = value
    return overrides


def load_config(path=None, environ: Optional[Mapping[str, str]] = None,
                overrides: Optional[Mapping[str, str]] = None) -> PipelineConfig:
    """Build a PipelineConfig from defaults, a config file, env vars and overrides.

    Args:
        path: Optional config file of ``section.name=value`` lines
        environ: Environment mapping (defaults to os.environ)
        overrides: Highest-precedence dotted keys, e.g. from CLI flags

    Returns:
        PipelineConfig: validated configuration

    Raises:
        ConfigError: unreadable file, unknown key or invalid value
    """
    flat: Dict[str, Optional[str]] = {}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f'config file not found: {path}')
        flat.update(dotenv_values(path))
    flat.update(env_overrides(environ))
    flat.update(overrides or {})

    try:
        return PipelineConfig.model_validate(_nest(flat))
    except ValidationError as exc:
        first = exc.errors()[0]
        location = '.'.join(str(part) for part in first['loc'])
        raise ConfigError(f'{location}: {first["msg"]}') from None
