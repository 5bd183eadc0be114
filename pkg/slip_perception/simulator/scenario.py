"""Parametric slip episodes.

The gripper holds an object for `drop_time` seconds and then releases it. Each
modality follows a simple process: the vertical force carries the object weight
until the release and decays afterwards while the wrist rings and the grip
preload leaves the sensor, the microphone hears an impact once the object
reaches the floor, and the object blob disappears from the RGB and depth images.
Moving episodes add base sway, camera shake and depth dropouts; Vad episodes add
speech, a flickering monitor and people crossing in front of the camera.
"""
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, root_validator, validator
from scipy.signal import butter, sosfilt

from slip_perception.constants import (
    ABNORMAL_WINDOW_S, Condition, DEPTH_MAX_MM, GRAVITY, Modality, MovingPattern, TIME_EPS,
)
from slip_perception.pipeline.streamsync import SensorFrame, StreamSet
from slip_perception.simulator.presets import NoiseProfile, ObjectPreset, default_noise, default_presets

# unit image offsets (rows, cols) of the background under each base motion
_SHIFT_DIRECTION = {
    MovingPattern.FORWARD: (1, 0),
    MovingPattern.BACKWARD: (-1, 0),
    MovingPattern.SIDEWAYS: (0, 1),
    MovingPattern.ROTATE: (0, -1),
}

PASSERBY_RGB = (95.0, 80.0, 70.0)


class SimulatorConfig(BaseModel):
    duration: float = 5.5
    drop_time: float = 5.0
    image_hz: float = 10.0
    ft_hz: float = 100.0
    sample_rate: int = 16000
    audio_chunk: float = 0.1
    image_size: Tuple[int, int] = (32, 32)
    fall_delay: float = 0.3
    impact_decay: float = 0.03
    force_decay: float = 0.05
    ft_baseline: Tuple[float, float, float, float, float, float] = (0.0, 0.0, 4.9, 0.0, 0.0, 0.0)
    # grip preload that leaves the sensor when the fingers open
    release_offset: Tuple[float, float, float, float, float, float] = (-0.6, 0.45, 0.0, 0.0, 0.0, 0.02)
    ring_gain: float = 0.5  # wrist ringing after the release, relative to the object weight
    ring_hz: float = 6.5
    ring_decay: float = 0.4
    passerby_depth_mm: float = 250.0
    lever_m: float = 0.05
    background_depth_mm: float = 1500.0
    object_depth_mm: float = 350.0
    speech_band: Tuple[float, float] = (300.0, 3400.0)
    speech_modulation_hz: float = 4.0
    presets: Dict[str, ObjectPreset] = None
    noise: Dict[Condition, NoiseProfile] = None

    class Config:
        extra = 'forbid'

    @validator('presets', pre=True, always=True)
    def _presets(cls, v):
        if v is None:
            return default_presets()
        return {name: p if isinstance(p, ObjectPreset) else ObjectPreset(**{'name': name, **p}) for name, p in v.items()}

    @validator('noise', pre=True, always=True)
    def _noise(cls, v):
        defaults = default_noise()
        if v is None:
            return defaults
        merged = dict(defaults)
        for condition, profile in v.items():
            merged[Condition(condition)] = profile if isinstance(profile, NoiseProfile) else NoiseProfile(**profile)
        return merged

    @validator('duration', 'image_hz', 'ft_hz', 'sample_rate', 'audio_chunk', 'impact_decay', 'force_decay', 'ring_decay')
    def _positive(cls, v):
        if v <= 0:
            raise ValueError('must be positive')
        return v

    @root_validator(skip_on_failure=True)
    def _timeline(cls, values):
        if values['drop_time'] + ABNORMAL_WINDOW_S > values['duration'] + TIME_EPS:
            raise ValueError('the episode must last at least 0.5 s past the drop')
        if values['drop_time'] <= 0:
            raise ValueError('drop_time must be positive')
        chunk_samples = values['audio_chunk'] * values['sample_rate']
        if abs(chunk_samples - round(chunk_samples)) > 1e-6:
            raise ValueError('audio_chunk must span a whole number of samples')
        return values


class ScenarioConfig(SimulatorConfig):
    seed: int = 0
    scene_seed: int = 0
    object_name: str = 'cracker_box'
    condition: Condition = Condition.STANDING
    pattern: MovingPattern = MovingPattern.FORWARD

    @root_validator(skip_on_failure=True)
    def _known_object(cls, values):
        if values['object_name'] not in values['presets']:
            raise ValueError(f'unknown object preset {values["object_name"]}')
        return values

    @property
    def preset(self) -> ObjectPreset:
        return self.presets[self.object_name]

    @property
    def noise_profile(self) -> NoiseProfile:
        return self.noise[self.condition]


@dataclass
class EpisodeBundle:
    streams: StreamSet
    drop_time: float
    scenario: ScenarioConfig


def _grid(duration: float, rate: float) -> np.ndarray:
    return np.arange(1, int(round(duration * rate)) + 1) / rate


def _load(t: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """1 while held, exponential decay after the release."""
    after = np.maximum(t - cfg.drop_time, 0.0)
    return np.where(t <= cfg.drop_time + TIME_EPS, 1.0, np.exp(-after / cfg.force_decay))


def _ringing(t: np.ndarray, cfg: ScenarioConfig, weight: float) -> np.ndarray:
    """Damped wrist oscillation after the release, proportional to the object weight."""
    after = np.maximum(t - cfg.drop_time, 0.0)
    ring = cfg.ring_gain * weight * np.exp(-after / cfg.ring_decay) * np.sin(2 * np.pi * cfg.ring_hz * after)
    return np.where(t <= cfg.drop_time + TIME_EPS, 0.0, ring)


def _force_torque(cfg: ScenarioConfig, rng, phase: float) -> List[SensorFrame]:
    t = _grid(cfg.duration, cfg.ft_hz)
    weight = cfg.preset.weight_g * GRAVITY / 1000.0
    ring = _ringing(t, cfg, weight)
    load = weight * _load(t, cfg) + ring
    ft = np.tile(np.asarray(cfg.ft_baseline, dtype=np.float64), (t.size, 1))
    ft[:, 1] += 0.5 * ring
    ft[:, 2] += load
    ft[:, 3] += load * cfg.lever_m
    ft[:, 4] -= 0.4 * load * cfg.lever_m
    ft += np.outer(1.0 - _load(t, cfg), cfg.release_offset)
    noise = cfg.noise_profile
    if cfg.condition != Condition.STANDING:
        swing = noise.ft_motion * np.sin(2 * np.pi * noise.motion_hz * t + phase)
        cross = noise.ft_cross * np.cos(2 * np.pi * noise.motion_hz * t + phase)
        if cfg.pattern == MovingPattern.FORWARD:
            ft[:, 0] += swing
            ft[:, 1] += cross
        elif cfg.pattern == MovingPattern.BACKWARD:
            ft[:, 0] -= swing
            ft[:, 1] -= cross
        elif cfg.pattern == MovingPattern.SIDEWAYS:
            ft[:, 1] += swing
            ft[:, 0] += cross
        else:
            ft[:, 5] += 4 * cfg.lever_m * swing
            ft[:, 0] += 0.3 * swing
            ft[:, 1] += cross
        ft[:, 2] += 0.5 * noise.ft_motion * np.sin(4 * np.pi * noise.motion_hz * t + 2 * phase)
    ft += rng.normal(0.0, noise.ft_noise, ft.shape)
    return [SensorFrame(Modality.FORCE_TORQUE, float(ti), row) for ti, row in zip(t, ft)]


def _audio(cfg: ScenarioConfig, rng, phase: float) -> List[SensorFrame]:
    noise = cfg.noise_profile
    n = int(round(cfg.duration * cfg.sample_rate))
    t = np.arange(n) / cfg.sample_rate
    signal = rng.normal(0.0, noise.audio_noise, n)
    impact = cfg.drop_time + cfg.fall_delay
    envelope = np.where(t >= impact, np.exp(-np.maximum(t - impact, 0.0) / cfg.impact_decay), 0.0)
    signal += cfg.preset.sound_gain * envelope * rng.normal(0.0, 1.0, n)
    babble = rng.normal(0.0, 1.0, n)
    if noise.speech_gain > 0:
        sos = butter(4, list(cfg.speech_band), btype='bandpass', fs=cfg.sample_rate, output='sos')
        speech = sosfilt(sos, babble)
        speech /= max(float(np.std(speech)), 1e-12)
        modulation = 0.5 * (1.0 + np.sin(2 * np.pi * cfg.speech_modulation_hz * t + phase))
        signal += noise.speech_gain * modulation * speech
    signal = np.clip(signal, -1.0, 1.0).astype(np.float32)
    chunk = int(round(cfg.audio_chunk * cfg.sample_rate))
    chunks = signal[:n - n % chunk].reshape(-1, chunk)
    times = np.arange(1, len(chunks) + 1) * chunk / cfg.sample_rate
    return [SensorFrame(Modality.AUDIO, float(ti), c.copy()) for ti, c in zip(times, chunks)]


def _scene(cfg: ScenarioConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Background texture and depth plane shared by every episode of a dataset."""
    h, w = cfg.image_size
    scene = np.random.Generator(np.random.PCG64(cfg.scene_seed))
    coarse = scene.uniform(60.0, 200.0, size=(h // 4 + 1, w // 4 + 1, 3))
    texture = np.kron(coarse, np.ones((4, 4, 1)))[:h, :w]
    rows = np.arange(h, dtype=np.float64)[:, None]
    plane = cfg.background_depth_mm + 25.0 * (h - 1 - rows) + scene.normal(0.0, 5.0, (h, w))
    return texture, plane


def _passerby(cfg: ScenarioConfig, rng):
    """Column band of a person crossing in front of the gripper, as a function of time, or None."""
    noise = cfg.noise_profile
    if noise.passerby_prob <= 0:
        return None
    draws = rng.uniform(0.0, 1.0, 4)
    if draws[0] >= noise.passerby_prob:
        return None
    h, w = cfg.image_size
    width = max(1, w // 3)
    start = draws[1] * (cfg.duration - 1.0)
    length = 0.6 + 0.8 * draws[2]
    leftward = draws[3] < 0.5

    def band(t):
        progress = (t - start) / length
        if not 0.0 <= progress <= 1.0:
            return None
        if leftward:
            progress = 1.0 - progress
        left = int(round(progress * (w + width))) - width
        cols = slice(max(left, 0), min(left + width, w))
        if cols.start >= cols.stop:
            return None
        return slice(h // 6, h), cols

    return band


def _images(cfg: ScenarioConfig, rng) -> Tuple[List[SensorFrame], List[SensorFrame]]:
    h, w = cfg.image_size
    preset = cfg.preset
    noise = cfg.noise_profile
    texture, plane = _scene(cfg)
    size = min(preset.size_px, h, w)
    top = min(int(0.62 * h), h - size) - size // 2
    left = w // 2 - size // 2
    blob = (slice(max(top, 0), max(top, 0) + size), slice(left, left + size))
    checker = (np.add.outer(np.arange(size), np.arange(size)) % 2)[..., None]
    object_rgb = np.asarray(preset.color, dtype=np.float64) * (1.0 - 0.35 * preset.texture_contrast * checker)
    monitor = (slice(2, 2 + h // 4), slice(w - 2 - w // 4, w - 2))
    moving = cfg.condition != Condition.STANDING
    dy, dx = _SHIFT_DIRECTION[cfg.pattern]
    crossing = _passerby(cfg, rng)
    rgb_frames, depth_frames = [], []
    for t in _grid(cfg.duration, cfg.image_hz):
        shift = int(round(noise.background_shift * t)) if moving else 0
        rgb = np.roll(texture, (dy * shift, dx * shift), axis=(0, 1)).copy()
        depth = np.roll(plane, (dy * shift, dx * shift), axis=(0, 1)).copy()
        flicker = rng.uniform(0.0, 1.0, 4)
        if noise.flicker > 0:
            rgb[monitor] = 40.0 + noise.flicker * flicker[0] + 0.3 * noise.flicker * flicker[1:]
        if t <= cfg.drop_time + TIME_EPS:
            rgb[blob] = object_rgb
            depth[blob] = cfg.object_depth_mm
        if crossing is not None:
            band = crossing(t)
            if band is not None:
                rgb[band] = PASSERBY_RGB
                depth[band] = cfg.passerby_depth_mm
        if moving and noise.shake_px > 0:
            jitter = tuple(int(j) for j in rng.integers(-noise.shake_px, noise.shake_px + 1, 2))
            rgb = np.roll(rgb, jitter, axis=(0, 1))
            depth = np.roll(depth, jitter, axis=(0, 1))
        rgb += rng.normal(0.0, noise.image_noise, rgb.shape)
        depth += rng.normal(0.0, noise.depth_noise_mm, depth.shape)
        if noise.depth_dropout > 0:
            depth[rng.uniform(0.0, 1.0, depth.shape) < noise.depth_dropout] = 0.0
        rgb_frames.append(SensorFrame(Modality.RGB, float(t), np.clip(np.rint(rgb), 0, 255).astype(np.uint8)))
        depth_frames.append(
            SensorFrame(Modality.DEPTH, float(t), np.clip(np.rint(depth), 0, DEPTH_MAX_MM).astype(np.uint16))
        )
    return rgb_frames, depth_frames


def generate_episode(cfg: ScenarioConfig, episode_id: str = None) -> EpisodeBundle:
    """Deterministic for a given config; every draw comes from PCG64(cfg.seed) in a fixed order."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    phase = float(rng.uniform(0.0, 2 * np.pi))
    ft = _force_torque(cfg, rng, phase)
    audio = _audio(cfg, rng, phase)
    rgb, depth = _images(cfg, rng)
    episode_id = episode_id or f'{cfg.condition.value}-{cfg.object_name}-{cfg.pattern.value}-{cfg.seed}'
    streams = StreamSet(
        episode_id=episode_id,
        condition=cfg.condition,
        streams={Modality.RGB: rgb, Modality.DEPTH: depth, Modality.AUDIO: audio, Modality.FORCE_TORQUE: ft},
        drop_time=cfg.drop_time,
    )
    return EpisodeBundle(streams=streams, drop_time=cfg.drop_time, scenario=cfg)
