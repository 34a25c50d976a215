import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coughscreen.audio_io import UnsupportedAudioError, Waveform
from coughscreen.preprocess import (
    PreprocessError, PreprocessParams, SilentAudioError, lowpass_filter, normalize_loudness, preprocess, resample,
)


def sine(freq, rate, seconds=1.0, amp=0.5):
    t = np.arange(int(rate * seconds)) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t), rate)


def rms(x):
    return float(np.sqrt(np.mean(np.asarray(x) ** 2)))


def test_normalize_examples():
    np.testing.assert_allclose(normalize_loudness(Waveform(np.array([0.1, -0.2]), 8000), 0.9).samples, [0.45, -0.9])
    np.testing.assert_allclose(normalize_loudness(Waveform(np.array([0.9, -0.9]), 8000), 0.9).samples, [0.9, -0.9])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=200).filter(lambda v: max(map(abs, v)) > 1e-6))
def test_normalize_peak_and_constant_ratio(values):
    x = np.array(values)
    y = normalize_loudness(Waveform(x, 8000), 0.9).samples
    assert abs(np.max(np.abs(y)) - 0.9) <= 1e-9
    nz = np.abs(x) > 1e-9
    ratio = y[nz] / x[nz]
    assert np.allclose(ratio, ratio[0], rtol=1e-9)


def test_normalize_silence_errors():
    with pytest.raises(SilentAudioError):
        normalize_loudness(Waveform(np.zeros(10), 8000))


def test_lowpass_passband_unity():
    w = sine(100, 16000)
    assert abs(rms(lowpass_filter(w, 5800, 4).samples) / rms(w.samples) - 1) < 0.01


def test_lowpass_stopband_attenuation():
    w = sine(7500, 16000)
    assert rms(lowpass_filter(w, 5800, 4).samples) < 0.1 * rms(w.samples)


def test_lowpass_dc_unchanged():
    w = Waveform(np.full(4000, 0.3), 16000)
    np.testing.assert_allclose(lowpass_filter(w, 5800, 4).samples, 0.3, atol=1e-6)


def test_lowpass_cutoff_above_nyquist():
    with pytest.raises(PreprocessError):
        lowpass_filter(sine(100, 8000), 4000, 4)


def test_lowpass_zero_phase():
    # a zero-phase filter leaves a passband tone's phase untouched
    w = sine(200, 16000)
    y = lowpass_filter(w, 5800, 4).samples
    mid = slice(2000, 14000)
    assert np.max(np.abs(y[mid] - w.samples[mid])) < 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_lowpass_never_adds_energy(seed):
    x = np.random.default_rng(seed).standard_normal(8000) * 0.1
    w = Waveform(x, 16000)
    assert np.sum(lowpass_filter(w, 5800, 4).samples ** 2) <= np.sum(x**2)


def test_resample_length():
    out = resample(Waveform(np.random.default_rng(0).standard_normal(16000) * 0.1, 16000), 12000)
    assert len(out.samples) == 12000 and out.sample_rate_hz == 12000


def test_resample_keeps_1khz_peak():
    out = resample(sine(1000, 16000), 12000)
    spec = np.abs(np.fft.rfft(out.samples))
    freqs = np.fft.rfftfreq(len(out.samples), 1 / 12000)
    assert abs(freqs[np.argmax(spec)] - 1000) <= freqs[1]


def test_resample_identity():
    w = sine(300, 12000)
    np.testing.assert_array_equal(resample(w, 12000).samples, w.samples)


def test_resample_rejects_upsampling():
    with pytest.raises(UnsupportedAudioError):
        resample(sine(300, 8000), 16000)


def test_params_validation():
    with pytest.raises(ValueError):
        PreprocessParams(lowpass_cutoff_hz=7000)
    with pytest.raises(ValueError):
        PreprocessParams(target_peak=1.5)


def test_chain_output_properties():
    rng = np.random.default_rng(3)
    w = Waveform(0.3 * rng.standard_normal(16000), 16000)
    out = preprocess(w)
    assert out.sample_rate_hz == 12000 and len(out.samples) == 12000
    assert abs(np.max(np.abs(out.samples)) - 0.9) < 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_chain_idempotent(seed):
    rng = np.random.default_rng(seed)
    w = Waveform(0.3 * rng.standard_normal(16000), 16000)
    once = preprocess(w)
    twice = preprocess(once)
    assert rms(twice.samples - once.samples) < 1e-4
