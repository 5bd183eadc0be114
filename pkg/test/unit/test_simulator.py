import os

import numpy as np
import pytest
from pydantic import ValidationError

from slip_perception.constants import Condition, GRAVITY, Label, Modality, OBJECT_PRESETS
from slip_perception.errors import ConfigError
from slip_perception.pipeline.dsp import MfccConfig
from slip_perception.pipeline.episode_io import read_episode, read_manifest
from slip_perception.pipeline.features import extract_features
from slip_perception.pipeline.streamsync import SyncConfig
from slip_perception.simulator import (
    DatasetConfig, ScenarioConfig, SimulatorConfig, generate_dataset, generate_episode, plan_dataset, split_sizes,
)
from slip_perception.utils.io import sha256_file


def test_episode_streams():
    streams = generate_episode(ScenarioConfig(seed=1)).streams
    assert len(streams.streams[Modality.RGB]) == 55
    assert len(streams.streams[Modality.DEPTH]) == 55
    assert len(streams.streams[Modality.AUDIO]) == 55
    assert len(streams.streams[Modality.FORCE_TORQUE]) == 550
    assert streams.streams[Modality.RGB][0].payload.shape == (32, 32, 3)
    assert streams.streams[Modality.RGB][0].payload.dtype == np.uint8
    assert streams.streams[Modality.DEPTH][0].payload.dtype == np.uint16
    assert streams.streams[Modality.AUDIO][0].payload.shape == (1600,)
    assert streams.streams[Modality.AUDIO][0].payload.dtype == np.float32
    assert streams.streams[Modality.AUDIO][-1].timestamp == 5.5
    streams.validate()


@pytest.mark.parametrize('condition', list(Condition))
def test_same_seed_same_episode(condition):
    a = generate_episode(ScenarioConfig(seed=5, condition=condition, pattern='sideways')).streams
    b = generate_episode(ScenarioConfig(seed=5, condition=condition, pattern='sideways')).streams
    for modality in a.streams:
        for fa, fb in zip(a.streams[modality], b.streams[modality]):
            assert fa.timestamp == fb.timestamp
            assert np.array_equal(fa.payload, fb.payload)


def test_different_seeds_differ():
    a = generate_episode(ScenarioConfig(seed=5)).streams
    b = generate_episode(ScenarioConfig(seed=6)).streams
    assert not np.array_equal(a.streams[Modality.AUDIO][0].payload, b.streams[Modality.AUDIO][0].payload)


@pytest.mark.parametrize('object_name', sorted(OBJECT_PRESETS))
def test_vertical_force_drops_by_object_weight(object_name):
    cfg = ScenarioConfig(seed=2, object_name=object_name, ring_gain=0.0, noise={'standing': {'ft_noise': 0.0}})
    ft = generate_episode(cfg).streams.streams[Modality.FORCE_TORQUE]
    held = ft[399]
    released = ft[-1]
    assert held.timestamp == 4.0 and released.timestamp == 5.5
    weight = OBJECT_PRESETS[object_name]['weight_g'] * GRAVITY / 1000.0
    assert held.payload[2] - released.payload[2] == pytest.approx(weight, rel=1e-4)


def quiet_force_torque(object_name):
    cfg = ScenarioConfig(seed=2, object_name=object_name, noise={'standing': {'ft_noise': 0.0}})
    return np.array([f.payload for f in generate_episode(cfg).streams.streams[Modality.FORCE_TORQUE]])


def test_release_ringing_scales_with_object_weight():
    heavy, light = quiet_force_torque('cracker_box'), quiet_force_torque('board_eraser')
    baseline = SimulatorConfig().ft_baseline[2]
    ratio = OBJECT_PRESETS['cracker_box']['weight_g'] / OBJECT_PRESETS['board_eraser']['weight_g']
    # frames 501.. lie after the release at 5.0 s
    np.testing.assert_allclose(heavy[501:, 2] - baseline, ratio * (light[501:, 2] - baseline), rtol=1e-9, atol=1e-12)
    weight = OBJECT_PRESETS['cracker_box']['weight_g'] * GRAVITY / 1000.0
    # still ringing 0.4 s after the release, long after the load has decayed
    assert abs(heavy[539, 2] - baseline) > 0.05 * weight


def test_release_removes_grip_preload():
    offset = np.asarray(SimulatorConfig().release_offset)
    for object_name in ('cracker_box', 'board_eraser'):
        ft = quiet_force_torque(object_name)
        assert np.array_equal(ft[0, [0, 5]], [0.0, 0.0])
        np.testing.assert_allclose(ft[-1, [0, 5]], offset[[0, 5]], rtol=1e-3)


def ft_separation(condition):
    """Largest per-channel shift of the released ticks in units of the normal-tick deviation, averaged over episodes."""
    values = []
    for object_name in ('cracker_box', 'metal_cup', 'board_eraser'):
        for pattern in ('forward', 'sideways', 'rotate'):
            for seed in range(3):
                cfg = ScenarioConfig(seed=seed, object_name=object_name, condition=condition, pattern=pattern)
                ft = np.array([f.payload for f in generate_episode(cfg).streams.streams[Modality.FORCE_TORQUE]])
                ticks = ft[9::10]
                normal, released = ticks[:50], ticks[50:]
                shift = np.abs(released.mean(axis=0) - normal.mean(axis=0)) / normal.std(axis=0)
                values.append(shift.max())
    return float(np.mean(values))


def test_force_torque_gets_harder_with_motion_and_disturbance():
    standing, moving, vad = (ft_separation(c) for c in ('standing', 'moving', 'vad'))
    assert standing > moving > vad
    assert standing > 2 * moving


def test_moving_camera_shakes_and_loses_depth():
    standing = generate_episode(ScenarioConfig(seed=8, condition='standing')).streams.streams[Modality.DEPTH]
    moving = generate_episode(ScenarioConfig(seed=8, condition='moving')).streams.streams[Modality.DEPTH]
    assert not np.any(standing[10].payload == 0)
    dropped = np.mean([np.mean(f.payload == 0) for f in moving])
    assert 0.03 < dropped < 0.07


def test_passerby_occludes_the_view():
    cfg = ScenarioConfig(seed=9, condition='vad', noise={'vad': {'passerby_prob': 1.0, 'depth_dropout': 0.0}})
    depth = generate_episode(cfg).streams.streams[Modality.DEPTH]
    near = [np.mean(np.abs(f.payload.astype(np.float64) - cfg.passerby_depth_mm) < 50.0) for f in depth]
    assert max(near) > 0.15
    never = ScenarioConfig(seed=9, condition='vad', noise={'vad': {'passerby_prob': 0.0, 'depth_dropout': 0.0}})
    depth = generate_episode(never).streams.streams[Modality.DEPTH]
    assert all(np.mean(np.abs(f.payload.astype(np.float64) - never.passerby_depth_mm) < 50.0) == 0 for f in depth)


def test_object_vanishes_from_depth_after_drop():
    depth = generate_episode(ScenarioConfig(seed=3, object_name='cracker_box')).streams.streams[Modality.DEPTH]
    before = depth[49].payload.astype(np.float64)
    after = depth[50].payload.astype(np.float64)
    assert depth[49].timestamp == 5.0
    assert np.abs(after - before).max() > 500.0


def test_vad_adds_speech_before_drop():
    standing = generate_episode(ScenarioConfig(seed=4, condition='standing')).streams.streams[Modality.AUDIO]
    vad = generate_episode(ScenarioConfig(seed=4, condition='vad')).streams.streams[Modality.AUDIO]
    assert np.std(vad[10].payload) > 2 * np.std(standing[10].payload)


def test_episode_labels_ticks_around_drop():
    streams = generate_episode(ScenarioConfig(seed=7)).streams
    samples = extract_features(streams, SyncConfig(), MfccConfig())
    labels = [s.label for s in samples]
    assert labels.count(Label.NORMAL) == 50
    assert labels.count(Label.ABNORMAL) == 5
    assert all(s.mfcc.shape == (13,) for s in samples)


def test_unknown_object():
    with pytest.raises(ValidationError):
        ScenarioConfig(object_name='anvil')


def test_episode_must_outlast_window():
    with pytest.raises(ValidationError):
        SimulatorConfig(duration=5.2, drop_time=5.0)


def test_split_sizes():
    assert split_sizes(100, (0.55, 0.18, 0.27)) == [55, 18, 27]
    assert split_sizes(64, (0.55, 0.18, 0.27)) == [35, 12, 17]
    assert sum(split_sizes(7, (0.5, 0.25, 0.25))) == 7


def test_plan_covers_every_cell_once():
    config = DatasetConfig(n_per_cell=1, conditions=['standing', 'vad'])
    plan = plan_dataset(config, seed=0)
    assert len(plan) == 64
    ids = [p.episode_id for p in plan]
    assert len(set(ids)) == 64
    splits = {name: {p.episode_id for p in plan if p.split == name} for name in ('train', 'val', 'eval')}
    assert [len(splits[s]) for s in ('train', 'val', 'eval')] == [35, 12, 17]
    assert not splits['train'] & splits['val']
    assert not splits['train'] & splits['eval']
    assert not splits['val'] & splits['eval']


def test_plan_is_seeded():
    config = DatasetConfig(n_per_cell=1)
    assert plan_dataset(config, seed=3) == plan_dataset(config, seed=3)
    assert [p.split for p in plan_dataset(config, seed=3)] != [p.split for p in plan_dataset(config, seed=4)]


@pytest.mark.parametrize('values', [
    {'n_per_cell': 0},
    {'split': (0.5, 0.3, 0.3)},
    {'conditions': []},
])
def test_invalid_dataset_config(values):
    with pytest.raises(ValidationError):
        DatasetConfig(**values)


def test_unknown_object_in_plan():
    with pytest.raises(ConfigError):
        plan_dataset(DatasetConfig(objects=['anvil']), seed=0)


def test_generate_dataset_is_reproducible(tmpdir):
    config = DatasetConfig(
        n_per_cell=1, split=(0.5, 0.5, 0.0), conditions=['moving'], objects=['book'], patterns=['forward', 'rotate'],
    )
    paths = [
        generate_dataset(config, SimulatorConfig(), seed=11, out_dir=os.path.join(str(tmpdir), name), workers=2)
        for name in ('a', 'b')
    ]
    manifests = [read_manifest(p) for p in paths]
    assert len(manifests[0]) == 2
    assert sorted(manifests[0]['split']) == ['train', 'val']
    for row_a, row_b in zip(manifests[0].itertuples(), manifests[1].itertuples()):
        assert row_a.episode_id == row_b.episode_id
        for modality in Modality:
            file_name = f'{modality.value}.slip'
            assert sha256_file(os.path.join(row_a.path, file_name)) == sha256_file(os.path.join(row_b.path, file_name))
    streams, manifest = read_episode(manifests[0].iloc[0]['path'])
    assert manifest.condition == Condition.MOVING
    assert manifest.drop_time == 5.0
    streams.validate()
