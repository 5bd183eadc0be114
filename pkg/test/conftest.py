import os

import numpy as np
import pytest

from slip_perception.config import PipelineConfig, config_from_dict, dump_config
from slip_perception.constants import Condition, Modality
from slip_perception.pipeline.streamsync import SensorFrame, StreamSet
from slip_perception.utils.io import persist_file


def tiny_config(**overrides) -> PipelineConfig:
    """
    A configuration small enough to generate, train and evaluate within seconds.

    :param overrides: top-level sections replacing the tiny defaults.
    :return: the validated config.
    """
    values = {
        'seed': 7,
        'workers': 2,
        'autoencoder': {'input_dim': 512, 'encoder_widths': [64, 32, 16, 12, 8]},
        'train': {'epochs': 3, 'batch_size': 64, 'patience': 5},
        'dataset': {
            'n_per_cell': 2,
            'split': [0.5, 0.25, 0.25],
            'conditions': ['standing'],
            'objects': ['cracker_box', 'metal_cup'],
            'patterns': ['forward', 'sideways'],
        },
        'ablation': {'masks': ['all', 'ft']},
    }
    values.update(overrides)
    return config_from_dict(values)


def grid_stream_set(duration=5.5, rate=10.0, image_size=(4, 4), audio_len=16, drop_time=5.0, seed=0) -> StreamSet:
    """
    Four streams sampled exactly on the tick grid with distinct random payloads.

    :return: a valid stream set with every modality present.
    """
    rng = np.random.default_rng(seed)
    h, w = image_size
    times = np.arange(1, int(round(duration * rate)) + 1) / rate
    streams = {
        Modality.RGB: [SensorFrame(Modality.RGB, t, rng.integers(0, 256, (h, w, 3)).astype(np.uint8)) for t in times],
        Modality.DEPTH: [SensorFrame(Modality.DEPTH, t, rng.uniform(0, 4000, (h, w))) for t in times],
        Modality.AUDIO: [SensorFrame(Modality.AUDIO, t, rng.uniform(-1, 1, audio_len)) for t in times],
        Modality.FORCE_TORQUE: [SensorFrame(Modality.FORCE_TORQUE, t, rng.normal(size=6)) for t in times],
    }
    return StreamSet(episode_id='grid', condition=Condition.STANDING, streams=streams, drop_time=drop_time)


@pytest.fixture
def out_dir(tmpdir) -> str:
    """
    Creates a temporary output directory.

    :param tmpdir: A temporary directory.
    :return: The path of the output directory.
    """
    return os.path.join(str(tmpdir), 'out')


@pytest.fixture(scope='session')
def tiny_pipeline(tmp_path_factory):
    """
    Generates the tiny dataset and trains one bundle on it, shared by every test of the session.

    :return: dict with the config, its YAML path, the manifest path, the training directory and the bundle path.
    """
    from slip_perception.options.generate import DatasetGenerator
    from slip_perception.options.train import Trainer

    os.environ['VERBOSE'] = 'false'
    root = tmp_path_factory.mktemp('tiny')
    config = tiny_config()
    config_path = os.path.join(str(root), 'config.yml')
    persist_file(dump_config(config), config_path)
    manifest_path = DatasetGenerator(config, os.path.join(str(root), 'data')).generate()
    train_dir = os.path.join(str(root), 'train')
    bundle_path = Trainer(config, manifest_path, train_dir).train()
    return {
        'config': config,
        'config_path': config_path,
        'manifest': manifest_path,
        'train_dir': train_dir,
        'bundle': bundle_path,
        'root': str(root),
    }
