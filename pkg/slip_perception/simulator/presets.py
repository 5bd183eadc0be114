from typing import Dict, Tuple

from pydantic import BaseModel, validator

from slip_perception.constants import Condition, OBJECT_PRESETS


class ObjectPreset(BaseModel):
    name: str
    weight_g: float
    size_px: int
    texture_contrast: float
    sound_gain: float
    color: Tuple[int, int, int]

    class Config:
        extra = 'forbid'
        allow_mutation = False

    @validator('weight_g')
    def _weight(cls, v):
        if v <= 0:
            raise ValueError('object weight must be positive')
        return v

    @validator('size_px')
    def _size(cls, v):
        if v <= 0:
            raise ValueError('object size must be positive')
        return v

    @validator('texture_contrast', 'sound_gain')
    def _unit(cls, v):
        if not 0 <= v <= 1:
            raise ValueError('must lie in [0, 1]')
        return v


class NoiseProfile(BaseModel):
    """Disturbance amplitudes of one recording condition."""
    ft_noise: float = 0.05  # N, white noise on every channel
    ft_motion: float = 0.0  # N, amplitude of the base-motion oscillation along the travel direction
    ft_cross: float = 0.0  # N, sway across the travel direction
    motion_hz: float = 1.2
    audio_noise: float = 0.005
    speech_gain: float = 0.0
    image_noise: float = 3.0  # grey levels
    background_shift: float = 0.0  # px per second
    flicker: float = 0.0  # grey levels of the monitor region
    depth_noise_mm: float = 4.0
    depth_dropout: float = 0.0  # fraction of depth pixels without a return
    shake_px: int = 0  # camera jitter per frame
    passerby_prob: float = 0.0  # chance that a person crosses the view once per episode

    class Config:
        extra = 'forbid'

    @validator('*')
    def _non_negative(cls, v):
        if v < 0:
            raise ValueError('noise amplitudes must not be negative')
        return v

    @validator('depth_dropout', 'passerby_prob')
    def _probability(cls, v):
        if v > 1:
            raise ValueError('must not exceed 1')
        return v


def default_presets() -> Dict[str, ObjectPreset]:
    return {name: ObjectPreset(name=name, **values) for name, values in OBJECT_PRESETS.items()}


def default_noise() -> Dict[Condition, NoiseProfile]:
    moving = dict(
        ft_motion=1.5, ft_cross=0.75, audio_noise=0.02, image_noise=5.0, background_shift=3.0, depth_noise_mm=8.0,
        depth_dropout=0.05, shake_px=1,
    )
    return {
        Condition.STANDING: NoiseProfile(),
        Condition.MOVING: NoiseProfile(**moving, ft_noise=0.1),
        Condition.VAD: NoiseProfile(**moving, ft_noise=0.2, speech_gain=0.15, flicker=90.0, passerby_prob=0.5),
    }
