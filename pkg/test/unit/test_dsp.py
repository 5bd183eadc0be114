import numpy as np
import pytest
from pydantic import ValidationError
from scipy.fft import dct, idct

from slip_perception.errors import ConfigError, DataError
from slip_perception.pipeline.dsp import MfccConfig, hz_to_mel, log_mel_energies, mel_filterbank, mel_to_hz, mfcc


def test_mel_scale():
    assert hz_to_mel(0.0) == 0.0
    assert hz_to_mel(700.0) == pytest.approx(781.17, abs=0.01)
    np.testing.assert_allclose(mel_to_hz(hz_to_mel([100.0, 1000.0, 8000.0])), [100.0, 1000.0, 8000.0])


def test_default_config_derives_fft_size_and_fmax():
    config = MfccConfig()
    assert config.frame_samples == 1600
    assert config.n_fft == 2048
    assert config.fmax == 8000.0


@pytest.mark.parametrize('values', [
    {'n_mfcc': 30, 'n_mels': 26},
    {'fmax': 9000.0},
    {'n_fft': 1000},
    {'n_fft': 1024},
    {'log_floor': 0.0},
])
def test_invalid_config(values):
    with pytest.raises(ValidationError):
        MfccConfig(**values)


def test_too_many_filters_for_fft_size():
    config = MfccConfig(frame_len=0.004, n_mels=60)
    with pytest.raises(ConfigError):
        mfcc(np.ones(64), config)


def test_filterbank_shape():
    config = MfccConfig(n_mels=2, n_mfcc=2)
    weights = mel_filterbank(config)
    assert weights.shape == (2, config.n_fft // 2 + 1)
    assert np.all(weights >= 0)
    assert np.all(weights.max(axis=1) <= 1.0)
    assert np.all(weights.sum(axis=1) > 0)


def test_zero_frame_gives_floor_energies():
    config = MfccConfig()
    coefficients = mfcc(np.zeros(1600), config).coefficients
    assert coefficients.shape == (13,)
    assert coefficients[0] == pytest.approx(np.sqrt(config.n_mels) * np.log(config.log_floor), rel=1e-12)
    np.testing.assert_allclose(coefficients[1:], 0.0, atol=1e-9)


def test_dct_round_trip():
    v = np.random.default_rng(0).normal(size=26)
    np.testing.assert_allclose(idct(dct(v, type=2, norm='ortho'), type=2, norm='ortho'), v, atol=1e-9)


def test_gain_only_shifts_first_coefficient():
    config = MfccConfig()
    frame = np.random.default_rng(1).normal(size=1600)
    base = mfcc(frame, config).coefficients
    louder = mfcc(3.0 * frame, config).coefficients
    assert louder[0] - base[0] == pytest.approx(np.sqrt(config.n_mels) * np.log(9.0), rel=1e-9)
    np.testing.assert_allclose(louder[1:], base[1:], atol=1e-9)


def test_sine_peaks_in_its_filter():
    config = MfccConfig()
    edges = mel_to_hz(np.linspace(hz_to_mel(config.fmin), hz_to_mel(config.fmax), config.n_mels + 2))
    t = np.arange(1600) / config.sample_rate
    frame = np.sin(2 * np.pi * edges[11] * t)
    assert int(np.argmax(log_mel_energies(frame, config))) == 10


def test_short_frames_are_padded():
    config = MfccConfig()
    frame = np.random.default_rng(2).normal(size=800)
    padded = np.concatenate([frame, np.zeros(800)])
    np.testing.assert_array_equal(mfcc(frame, config).coefficients, mfcc(padded, config).coefficients)


def test_empty_frame():
    with pytest.raises(DataError):
        mfcc(np.zeros(0), MfccConfig())


def test_lifter_keeps_first_coefficient():
    frame = np.random.default_rng(4).normal(size=1600)
    plain = mfcc(frame, MfccConfig()).coefficients
    liftered = mfcc(frame, MfccConfig(lifter=22)).coefficients
    assert liftered[0] == plain[0]
    assert liftered[1] == pytest.approx(plain[1] * (1.0 + 11.0 * np.sin(np.pi / 22)), rel=1e-12)
