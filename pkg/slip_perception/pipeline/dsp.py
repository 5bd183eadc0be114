from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from pydantic import BaseModel, root_validator, validator
from scipy.fft import dct

from slip_perception.errors import ConfigError, DataError


class MfccConfig(BaseModel):
    sample_rate: int = 16000
    frame_len: float = 0.1
    n_fft: Optional[int] = None
    n_mels: int = 26
    n_mfcc: int = 13
    fmin: float = 0.0
    fmax: Optional[float] = None
    log_floor: float = 1e-10
    pre_emphasis: float = 0.0
    lifter: int = 0

    class Config:
        extra = 'forbid'
        allow_mutation = False

    @validator('sample_rate', 'n_mels', 'n_mfcc')
    def _positive(cls, v):
        if v <= 0:
            raise ValueError('must be positive')
        return v

    @validator('log_floor')
    def _positive_floor(cls, v):
        if v <= 0:
            raise ValueError('log_floor must be positive')
        return v

    @root_validator(skip_on_failure=True)
    def _consistent(cls, values):
        frame_samples = int(round(values['frame_len'] * values['sample_rate']))
        if frame_samples <= 0:
            raise ValueError('frame_len is shorter than one sample')
        n_fft = values.get('n_fft')
        if n_fft is None:
            n_fft = 1 << (frame_samples - 1).bit_length()
            values['n_fft'] = n_fft
        if n_fft & (n_fft - 1) or n_fft < frame_samples:
            raise ValueError(f'n_fft must be a power of two >= {frame_samples} frame samples, got {n_fft}')
        nyquist = values['sample_rate'] / 2
        if values.get('fmax') is None:
            values['fmax'] = nyquist
        if values['fmax'] > nyquist:
            raise ValueError(f'fmax {values["fmax"]} exceeds the Nyquist frequency {nyquist}')
        if not 0 <= values['fmin'] < values['fmax']:
            raise ValueError('fmin must lie in [0, fmax)')
        if values['n_mfcc'] > values['n_mels']:
            raise ValueError('n_mfcc must not exceed n_mels')
        return values

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_len * self.sample_rate))


@dataclass(frozen=True)
class MfccVector:
    coefficients: np.ndarray
    tick_time: float = 0.0


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: MfccConfig) -> np.ndarray:
    """Triangular filters, centers equally spaced in mel, evaluated on the rfft bin frequencies."""
    return _mel_filterbank(config.sample_rate, config.n_fft, config.n_mels, config.fmin, config.fmax).copy()


@lru_cache(maxsize=16)
def _mel_filterbank(sample_rate, n_fft, n_mels, fmin, fmax):
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - left) / (center - left)
    falling = (right - bins[None, :]) / (right - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.sum(axis=1) <= 0)
    if empty.size:
        raise ConfigError(
            f'{n_mels} mel filters are too many for n_fft={n_fft}: filter(s) {empty.tolist()} cover no FFT bin'
        )
    weights.flags.writeable = False
    return weights


def _prepare_frame(frame, config: MfccConfig) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64).ravel()
    if frame.size == 0:
        raise DataError('cannot compute MFCC of an empty audio frame')
    n = config.frame_samples
    if frame.size < n:
        frame = np.pad(frame, (0, n - frame.size))
    elif frame.size > n:
        frame = frame[-n:]
    if config.pre_emphasis:
        frame = np.append(frame[0], frame[1:] - config.pre_emphasis * frame[:-1])
    return frame * np.hamming(n)


def log_mel_energies(frame, config: MfccConfig) -> np.ndarray:
    windowed = _prepare_frame(frame, config)
    power = np.abs(np.fft.rfft(windowed, config.n_fft)) ** 2
    energies = _mel_filterbank(config.sample_rate, config.n_fft, config.n_mels, config.fmin, config.fmax) @ power
    return np.log(np.maximum(energies, config.log_floor))


def mfcc(frame, config: MfccConfig, tick_time: float = 0.0) -> MfccVector:
    coefficients = dct(log_mel_energies(frame, config), type=2, norm='ortho')[:config.n_mfcc]
    if config.lifter:
        n = np.arange(config.n_mfcc)
        coefficients = coefficients * (1.0 + (config.lifter / 2.0) * np.sin(np.pi * n / config.lifter))
    return MfccVector(coefficients=coefficients, tick_time=tick_time)
