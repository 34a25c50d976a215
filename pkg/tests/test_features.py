import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import count_sign_changes, dft_power_welch

from coughscreen.features import (
    FEATURE_NAMES, LOG_FLOOR, DegenerateSegmentError, DegenerateSpectrumError, MelImageParams, MfccParams, PowerSpectrum,
    bilinear_resize, cepstrum, feature_dict, feature_vector, hz_to_mel, log_mel_energies, mel_filterbank,
    mel_spectrogram_image, mel_to_hz, mfcc_from_energies, mfcc_means, power_spectrum, psd_band_powers,
    read_feature_table, read_raster, spectral_features, time_domain_features, write_feature_table, write_raster,
)
from coughscreen.segment import CoughSegment

RATE = 12000


def seg_of(x, rate=RATE):
    x = np.asarray(x, dtype=np.float64)
    return CoughSegment("s", 0, len(x), x, rate)


def sine(freq, seconds=1.0, amp=0.5, rate=RATE, phase=0.3):
    t = np.arange(int(rate * seconds)) / rate
    return amp * np.sin(2 * np.pi * freq * t + phase)


# -- schema -----------------------------------------------------------------

def test_schema_has_39_unique_names():
    assert len(FEATURE_NAMES) == 39 == len(set(FEATURE_NAMES))
    assert FEATURE_NAMES[0] == "zcr" and FEATURE_NAMES[-1] == "psd_band_7"


# -- time domain -------------------------------------------------------------

def test_square_wave_zcr_and_crest():
    x = np.where(np.arange(1000) % 2 == 0, 1.0, -1.0)
    zcr, rms, crest, _ = time_domain_features(seg_of(x))
    assert zcr == 1.0 and crest == 1.0 and rms == 1.0


def test_sine_crest_sqrt2():
    _, _, crest, _ = time_domain_features(seg_of(sine(440)))
    assert abs(crest - math.sqrt(2)) < 0.01


def test_100hz_zcr_counts_200_crossings():
    x = np.sin(2 * np.pi * 100 * np.arange(RATE) / RATE + 0.1)
    zcr, *_ = time_domain_features(seg_of(x))
    assert count_sign_changes(x) == 199 or count_sign_changes(x) == 200
    assert abs(zcr - 199 / 11999) < 1e-4


def test_length_is_n_over_rate():
    *_, length = time_domain_features(seg_of(np.ones(600)))
    assert length == 0.05


def test_all_zero_segment_is_degenerate():
    with pytest.raises(DegenerateSegmentError):
        time_domain_features(seg_of(np.zeros(100)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3000))
def test_time_domain_ranges_and_sign_change_oracle(seed, n):
    x = np.random.default_rng(seed).standard_normal(n)
    zcr, rms, crest, length = time_domain_features(seg_of(x))
    assert 0 <= zcr <= 1 and crest >= 1 and length > 0
    assert zcr == pytest.approx(count_sign_changes(x) / (n - 1))


# -- spectra ------------------------------------------------------------------

def test_welch_matches_explicit_dft():
    x = np.random.default_rng(4).standard_normal(5000)
    ps = power_spectrum(seg_of(x))
    f, p = dft_power_welch(x, RATE)
    np.testing.assert_allclose(ps.freqs_hz, f)
    np.testing.assert_allclose(ps.power, p, rtol=1e-9, atol=1e-15)


def test_welch_short_segment_single_padded_frame():
    x = np.random.default_rng(5).standard_normal(300)
    f, p = dft_power_welch(x, RATE)
    np.testing.assert_allclose(power_spectrum(seg_of(x)).power, p, rtol=1e-9, atol=1e-15)


def test_1khz_peak_bin():
    ps = power_spectrum(seg_of(sine(1000)))
    assert abs(ps.freqs_hz[np.argmax(ps.power)] - 1000) <= ps.freqs_hz[1]


def test_white_noise_flatness_over_seeds():
    vals = [spectral_features(power_spectrum(seg_of(np.random.default_rng(s).standard_normal(RATE))))["spectral_flatness"] for s in range(5)]
    assert np.mean(vals) > 0.8


def test_dc_power_concentrated_at_bin_zero():
    # The Hann window leaks DC into bin 1; no power reaches bin 2 or beyond.
    ps = power_spectrum(seg_of(np.full(4096, 0.5)))
    assert np.argmax(ps.power) == 0
    assert np.sum(ps.power[2:]) < 1e-20 * ps.power[0]


def _point_mass(freq_hz, n=513, df=6000 / 512):
    f = np.arange(n) * df
    p = np.zeros(n)
    p[int(round(freq_hz / df))] = 1.0
    return PowerSpectrum(f, p)


def test_point_mass_spectrum():
    ps = PowerSpectrum(np.arange(0, 6001, 10.0), np.where(np.arange(0, 6001, 10.0) == 1000, 1.0, 0.0))
    s = spectral_features(ps)
    assert s["spectral_centroid_hz"] == pytest.approx(1000)
    assert s["spectral_spread_hz"] == 0
    assert s["spectral_flatness"] < 1e-6
    assert s["dominant_frequency_hz"] == 1000


def test_flat_spectrum():
    f = np.linspace(0, 6000, 513)
    s = spectral_features(PowerSpectrum(f, np.ones_like(f)))
    df = f[1]
    assert abs(s["spectral_centroid_hz"] - 3000) <= df
    assert abs(s["spectral_flatness"] - 1) <= 1e-9
    assert abs(s["spectral_rolloff_hz"] - 5100) <= df


def test_two_point_masses():
    f = np.arange(0, 6001, 10.0)
    p = np.where((f == 1000) | (f == 3000), 1.0, 0.0)
    s = spectral_features(PowerSpectrum(f, p))
    assert s["spectral_centroid_hz"] == pytest.approx(2000)
    assert s["spectral_spread_hz"] == pytest.approx(1000)
    assert s["spectral_skewness"] == pytest.approx(0, abs=1e-12)
    assert s["spectral_bandwidth_hz"] == pytest.approx(s["spectral_spread_hz"])


def test_gaussian_spectrum_kurtosis_near_three():
    f = np.linspace(0, 6000, 4097)
    p = np.exp(-0.5 * ((f - 3000) / 300) ** 2)
    assert spectral_features(PowerSpectrum(f, p))["spectral_kurtosis"] == pytest.approx(3, abs=1e-3)


def test_slope_and_decrease_by_definition():
    f = np.linspace(0, 6000, 65)
    p = np.random.default_rng(6).uniform(0.1, 1, 65)
    s = spectral_features(PowerSpectrum(f, p))
    assert s["spectral_slope"] == pytest.approx(np.polyfit(f, p, 1)[0], rel=1e-9)
    dec = sum((p[k] - p[0]) / k for k in range(1, 65)) / p[1:].sum()
    assert s["spectral_decrease"] == pytest.approx(dec, rel=1e-12)


def test_zero_spectrum_degenerate():
    with pytest.raises(DegenerateSpectrumError):
        spectral_features(PowerSpectrum(np.linspace(0, 6000, 10), np.zeros(10)))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e3, allow_nan=False), min_size=4, max_size=64).filter(lambda v: sum(v) > 1e-6))
def test_spectral_ranges(power):
    f = np.linspace(0, 6000, len(power))
    p = np.array(power)
    s = spectral_features(PowerSpectrum(f, p))
    assert f[0] - 1e-9 <= s["spectral_centroid_hz"] <= f[-1] + 1e-9
    assert 0 <= s["spectral_rolloff_hz"] <= 6000
    assert 0 <= s["spectral_flatness"] <= 1
    point_mass = np.count_nonzero(p) == 1
    assert (s["spectral_spread_hz"] == 0) == point_mass or s["spectral_spread_hz"] < 1e-6 * 6000


def test_psd_bands():
    p1k = psd_band_powers(power_spectrum(seg_of(sine(1000))))
    assert p1k[3] / p1k.sum() > 0.95
    p100 = psd_band_powers(power_spectrum(seg_of(sine(100))))
    assert np.argmax(p100) == 0 and np.all(p100[1:] < 1e-3 * p100[0])
    zero = PowerSpectrum(np.linspace(0, 6000, 513), np.zeros(513))
    assert np.all(psd_band_powers(zero) == 0)


def test_psd_band_edges_half_open():
    f = np.array([0, 200, 300, 425, 950.0])
    bands = psd_band_powers(PowerSpectrum(f, np.ones(5)))
    assert bands[0] == 1 and bands[1] == 1 and bands[3] == 1


# -- mel / MFCC ---------------------------------------------------------------

def test_htk_mel_scale():
    assert hz_to_mel(700) == pytest.approx(2595 * math.log10(2))
    assert mel_to_hz(hz_to_mel(1234.5)) == pytest.approx(1234.5)


def test_filterbank_shape_and_peaks():
    fb = mel_filterbank(40, 1024, RATE)
    assert fb.shape == (40, 513)
    assert np.all(fb >= 0) and np.all(fb.max(axis=1) > 0.5)


def test_constant_energies_only_c0():
    c = mfcc_from_energies(np.full((5, 40), 3.7))
    assert abs(c[0, 0]) > 0
    assert np.max(np.abs(c[:, 1:17])) < 1e-9


def test_mfcc_scale_changes_only_c0():
    x = np.random.default_rng(7).standard_normal(6000) * 0.1
    a = mfcc_means(seg_of(x))
    b = mfcc_means(seg_of(10 * x))
    assert abs(b[0] - a[0]) > 1
    np.testing.assert_allclose(b[1:], a[1:], atol=1e-6)
    # the shift in c0 is log(100) * sqrt(40) under the orthonormal DCT
    assert b[0] - a[0] == pytest.approx(math.log(100) * math.sqrt(40), rel=1e-9)


def test_cepstrum_round_trip():
    le = log_mel_energies(seg_of(np.random.default_rng(8).standard_normal(4000)))
    full = cepstrum(le)
    from scipy.fft import idct
    back = idct(full, type=2, norm="ortho", axis=-1)
    np.testing.assert_allclose(cepstrum(back)[:, :17], full[:, :17], atol=1e-10)


def test_log_floor_applies():
    le = log_mel_energies(seg_of(np.concatenate([np.zeros(4096), [1e-30]])))
    assert np.all(le >= math.log(LOG_FLOOR) - 1e-12)


def test_mfcc_params_validation():
    with pytest.raises(ValueError):
        MfccParams(frame_length=256, hop=512)
    with pytest.raises(ValueError):
        MfccParams(n_mels_filterbank=10, n_coeffs=17)


# -- feature vector -----------------------------------------------------------

def test_vector_arity_finite_and_deterministic():
    s = seg_of(np.random.default_rng(9).standard_normal(3000) * 0.2)
    a, b = feature_vector(s), feature_vector(s)
    assert a.shape == (39,) and np.all(np.isfinite(a))
    assert a.tobytes() == b.tobytes()


def test_vector_scale_covariance():
    x = np.random.default_rng(10).standard_normal(3000) * 0.2
    a, b = feature_dict(feature_vector(seg_of(x))), feature_dict(feature_vector(seg_of(2 * x)))
    for name in ("zcr", "cough_length_s", "spectral_flatness", "spectral_centroid_hz"):
        assert b[name] == pytest.approx(a[name], abs=1e-6)
    assert b["rms_power"] == pytest.approx(2 * a["rms_power"])


def test_vector_invariants_on_random_segments():
    rng = np.random.default_rng(11)
    for _ in range(50):
        v = feature_dict(feature_vector(seg_of(rng.standard_normal(int(rng.integers(200, 5000))))))
        assert 0 <= v["zcr"] <= 1 and 0 <= v["spectral_flatness"] <= 1 and v["crest_factor"] >= 1
        assert all(v[f"psd_band_{k}"] >= 0 for k in range(8))


def test_feature_table_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    rows = [("s1", 0, "cancer", rng.standard_normal(39)), ("s2", 1, "healthy", rng.standard_normal(39))]
    path = tmp_path / "f.csv"
    write_feature_table(path, rows)
    ids, idx, labels, X = read_feature_table(path)
    assert ids == ["s1", "s2"] and idx == [0, 1] and labels == ["cancer", "healthy"]
    np.testing.assert_array_equal(X, np.array([r[3] for r in rows]))


# -- spectrogram image ----------------------------------------------------------

def test_silence_image_zero():
    img = mel_spectrogram_image(seg_of(np.zeros(4000)))
    assert img.shape == (224, 224, 3) and not img.any()


def test_image_shape_and_channels():
    img = mel_spectrogram_image(seg_of(np.random.default_rng(13).standard_normal(5000)))
    assert img.shape == (224, 224, 3) and img.dtype == np.float32
    assert np.array_equal(img[..., 0], img[..., 1]) and np.array_equal(img[..., 1], img[..., 2])
    assert img.min() >= 0 and img.max() <= 1


def test_steady_tone_single_bright_row():
    img = mel_spectrogram_image(seg_of(sine(1000, seconds=2)))[..., 0]
    rows = np.argmax(img, axis=0)
    assert np.ptp(rows) <= 0.05 * 224
    # brightest row sits where 1 kHz lands on the mel axis (row 0 = highest band)
    mel_pos = (hz_to_mel(1000) / hz_to_mel(RATE / 2)) * 129 - 1
    expect_row = (127 - mel_pos) / 127 * 223
    assert abs(np.median(rows) - expect_row) < 6


def test_bilinear_resize_corners_and_linearity():
    a = np.arange(12, dtype=float).reshape(3, 4)
    r = bilinear_resize(a, 5, 7)
    assert r[0, 0] == a[0, 0] and r[-1, -1] == a[-1, -1]
    # an affine ramp stays affine
    assert np.allclose(np.diff(r, 2, axis=1), 0) and np.allclose(np.diff(r, 2, axis=0), 0)


def test_raster_round_trip(tmp_path):
    img = mel_spectrogram_image(seg_of(sine(500)))
    path = tmp_path / "x.f32"
    write_raster(path, img)
    assert path.read_bytes().startswith(b"224 224 3\n")
    np.testing.assert_array_equal(read_raster(path), img)


def test_mel_image_params_default_128_bands():
    assert MelImageParams().n_mels == 128
