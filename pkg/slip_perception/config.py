import hashlib
import json
import os
from typing import List

import numpy as np
import yaml
from pydantic import BaseModel, ValidationError, root_validator, validator

from slip_perception.constants import ABLATION_MASKS, CONFIG_VERSION, MASK_ALIASES, Modality, MODALITY_ORDER
from slip_perception.errors import ConfigError
from slip_perception.pipeline.autoencoder import AeArchitecture, TrainConfig
from slip_perception.pipeline.dsp import MfccConfig
from slip_perception.pipeline.fusion import FusionSpec
from slip_perception.pipeline.metrics import MetricsConfig
from slip_perception.pipeline.nap import NapConfig
from slip_perception.pipeline.streamsync import SyncConfig
from slip_perception.simulator.dataset import DatasetConfig
from slip_perception.simulator.scenario import SimulatorConfig


class AblationConfig(BaseModel):
    retrain_per_modality: bool = True
    masks: List[str] = list(ABLATION_MASKS)
    min_bottleneck: int = 4

    class Config:
        extra = 'forbid'

    @validator('masks', each_item=True)
    def _known_mask(cls, v):
        parse_mask(v)
        return v


class StreamConfig(BaseModel):
    report_latency: bool = True
    max_skipped_lines: int = -1  # negative means unlimited

    class Config:
        extra = 'forbid'


# sections whose `seed` key is derived from the global seed, by sub-seed name
DERIVED_SEEDS = {'fusion': 'fusion', 'train': 'shuffle'}

SECTION_COMMENTS = {
    'version': 'config document version',
    'seed': 'global seed; fusion weights, autoencoder init, shuffling and the simulator derive their seeds from it',
    'workers': 'threads used to load and featurize episodes',
    'sync': 'alignment of the raw streams to the tick grid',
    'mfcc': 'audio features computed per tick',
    'fusion': 'fixed convolutional integration of the four modalities; seed 0 means derived from the global seed',
    'autoencoder': 'architecture of the fully-connected autoencoder',
    'train': 'optimizer and early stopping; seed 0 means derived from the global seed',
    'nap': 'anomaly score and decision threshold',
    'metrics': 'evaluation reports',
    'simulator': 'synthetic episode timing, objects and noise per condition',
    'dataset': 'episodes generated per cell and split ratios',
    'ablation': 'modality sets compared by the ablate command',
    'stream': 'streaming scorer',
}


class PipelineConfig(BaseModel):
    version: int = CONFIG_VERSION
    seed: int = 0
    workers: int = 4
    sync: SyncConfig = SyncConfig()
    mfcc: MfccConfig = MfccConfig()
    fusion: FusionSpec = FusionSpec()
    autoencoder: AeArchitecture = AeArchitecture()
    train: TrainConfig = TrainConfig()
    nap: NapConfig = NapConfig()
    metrics: MetricsConfig = MetricsConfig()
    simulator: SimulatorConfig = SimulatorConfig()
    dataset: DatasetConfig = DatasetConfig()
    ablation: AblationConfig = AblationConfig()
    stream: StreamConfig = StreamConfig()

    class Config:
        extra = 'forbid'

    @validator('seed')
    def _u64(cls, v):
        if not 0 <= v < 2 ** 64:
            raise ValueError('seed must be an unsigned 64-bit integer')
        return v

    @validator('workers')
    def _workers(cls, v):
        if v <= 0:
            raise ValueError('workers must be positive')
        return v

    @root_validator(skip_on_failure=True)
    def _consistent(cls, values):
        if values['version'] != CONFIG_VERSION:
            raise ValueError(f'config version {values["version"]} is not supported, expected {CONFIG_VERSION}')
        if values['fusion'].n_mfcc != values['mfcc'].n_mfcc:
            raise ValueError(f'fusion.n_mfcc {values["fusion"].n_mfcc} != mfcc.n_mfcc {values["mfcc"].n_mfcc}')
        if values['fusion'].output_dim != values['autoencoder'].input_dim:
            raise ValueError(
                f'fusion.output_dim {values["fusion"].output_dim} != autoencoder.input_dim '
                f'{values["autoencoder"].input_dim}'
            )
        if tuple(values['fusion'].image_size) != tuple(values['simulator'].image_size):
            raise ValueError('fusion.image_size must match simulator.image_size')
        if values['simulator'].sample_rate != values['mfcc'].sample_rate:
            raise ValueError('simulator.sample_rate must match mfcc.sample_rate')
        for section, name in DERIVED_SEEDS.items():
            stage_seed = values[section].seed
            if stage_seed and stage_seed != derive_seed(values['seed'], name):
                raise ValueError(
                    f'{section}.seed is derived from the global seed; leave it at 0 or set the top-level seed '
                    f'(got {stage_seed})'
                )
        return values

    def resolved(self) -> 'PipelineConfig':
        """Copy whose stage seeds are derived from the global seed."""
        return self.copy(update={
            section: getattr(self, section).copy(update={'seed': derive_seed(self.seed, name)})
            for section, name in DERIVED_SEEDS.items()
        })


def derive_seed(seed: int, name: str) -> int:
    entropy = [int(seed)] + list(name.encode('utf-8'))
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def parse_mask(value) -> List[Modality]:
    """'all' or a comma-separated list of modality names, returned in fusion order."""
    if value is None:
        return list(MODALITY_ORDER)
    names = [v.strip().lower() for v in str(value).split(',') if v.strip()]
    if not names:
        raise ConfigError('the modality mask excludes every modality')
    if names == ['all']:
        return list(MODALITY_ORDER)
    unknown = [n for n in names if n not in MASK_ALIASES]
    if unknown:
        raise ConfigError(f'unknown modalities {unknown} in mask, expected names from {sorted(MASK_ALIASES)}')
    chosen = {MASK_ALIASES[n] for n in names}
    return [m for m in MODALITY_ORDER if m in chosen]


def config_from_dict(values: dict) -> PipelineConfig:
    try:
        return PipelineConfig.parse_obj(values or {})
    except ValidationError as e:
        raise ConfigError(f'invalid configuration:\n{e}') from e


def load_config(path: str = None, seed: int = None) -> PipelineConfig:
    values = {}
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f'config file {path} does not exist')
        with open(path, encoding='utf-8') as f:
            try:
                values = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f'config file {path} is not valid YAML: {e}') from e
        if not isinstance(values, dict):
            raise ConfigError(f'config file {path} must hold a mapping')
    if seed is not None:
        values['seed'] = seed
    return config_from_dict(values)


def config_to_dict(config: PipelineConfig) -> dict:
    return json.loads(config.json())


def dump_config(config: PipelineConfig) -> str:
    sections = []
    for key, value in config_to_dict(config).items():
        comment = SECTION_COMMENTS.get(key)
        block = yaml.safe_dump({key: value}, sort_keys=False, default_flow_style=False)
        sections.append(f'# {comment}\n{block}' if comment else block)
    return '\n'.join(sections)


def config_hash(config: PipelineConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
