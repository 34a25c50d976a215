"""Acoustic feature extraction.

Every function here accepts any object exposing ``samples`` and
``sample_rate_hz`` (a :class:`~coughscreen.segment.CoughSegment` or a
:class:`~coughscreen.audio_io.Waveform`).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, rfft, rfftfreq

PSD_BANDS_HZ = (
    (0, 200), (300, 425), (500, 650), (950, 1150),
    (1400, 1800), (2300, 2400), (2850, 2950), (3800, 3900),
)

SPECTRAL_NAMES = (
    "dominant_frequency_hz",
    "spectral_centroid_hz",
    "spectral_rolloff_hz",
    "spectral_spread_hz",
    "spectral_skewness",
    "spectral_kurtosis",
    "spectral_bandwidth_hz",
    "spectral_flatness",
    "spectral_slope",
    "spectral_decrease",
)

N_MFCC = 17

FEATURE_NAMES: tuple[str, ...] = (
    ("zcr", "rms_power")
    + SPECTRAL_NAMES
    + ("crest_factor",)
    + tuple(f"mfcc_mean_{i}" for i in range(N_MFCC))
    + ("cough_length_s",)
    + tuple(f"psd_band_{i}" for i in range(len(PSD_BANDS_HZ)))
)
assert len(FEATURE_NAMES) == 39

ROLLOFF_FRACTION = 0.85
LOG_FLOOR = 1e-10
IMAGE_SIZE = 224


class DegenerateSegmentError(ValueError):
    pass


class DegenerateSpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class PowerSpectrum:
    freqs_hz: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        if self.freqs_hz.shape != self.power.shape:
            raise ValueError("frequency grid and power must have the same length")


@dataclass(frozen=True)
class MfccParams:
    frame_length: int = 1024
    hop: int = 256
    n_mels_filterbank: int = 40
    n_coeffs: int = N_MFCC

    def __post_init__(self):
        if self.hop > self.frame_length:
            raise ValueError("hop must not exceed frame_length")
        if self.n_coeffs > self.n_mels_filterbank:
            raise ValueError("n_coeffs must not exceed the filterbank size")


@dataclass(frozen=True)
class MelImageParams:
    frame_length: int = 1024
    hop: int = 256
    n_mels: int = 128
    top_db: float = 80.0
    size: int = IMAGE_SIZE


# -- time domain ------------------------------------------------------------

def time_domain_features(seg) -> tuple[float, float, float, float]:
    """Return ``(zcr, rms_power, crest_factor, cough_length_s)``."""
    x = np.asarray(seg.samples, dtype=np.float64)
    n = len(x)
    if n == 0:
        raise DegenerateSegmentError("empty segment")
    rms = float(np.sqrt(np.mean(x**2)))
    if rms == 0.0:
        raise DegenerateSegmentError("all-zero segment has undefined crest factor")
    crossings = np.count_nonzero(np.diff(x >= 0))
    zcr = crossings / (n - 1) if n > 1 else 0.0
    crest = float(np.max(np.abs(x))) / rms
    return zcr, rms, crest, n / seg.sample_rate_hz


# -- framing / spectra ------------------------------------------------------

def frame_signal(x: np.ndarray, frame_length: int, hop: int) -> np.ndarray:
    """Slice into frames; a signal shorter than one frame gives one zero-padded frame."""
    if len(x) < frame_length:
        out = np.zeros((1, frame_length))
        out[0, : len(x)] = x
        return out
    n_frames = 1 + (len(x) - frame_length) // hop
    view = np.lib.stride_tricks.sliding_window_view(x, frame_length)[::hop]
    return np.array(view[:n_frames])


def power_spectrum(seg, frame_length: int = 1024, overlap: float = 0.5) -> PowerSpectrum:
    """Welch estimate (Hann window, one-sided, density scaling)."""
    x = np.asarray(seg.samples, dtype=np.float64)
    if len(x) == 0:
        raise DegenerateSegmentError("empty segment")
    fs = seg.sample_rate_hz
    hop = max(1, int(round(frame_length * (1 - overlap))))
    win = np.hanning(frame_length + 1)[:-1]  # periodic Hann
    frames = frame_signal(x, frame_length, hop) * win
    spec = np.mean(np.abs(rfft(frames, axis=1)) ** 2, axis=0) / (fs * np.sum(win**2))
    spec[1:] *= 2.0
    if frame_length % 2 == 0:
        spec[-1] /= 2.0  # Nyquist bin has no mirror
    return PowerSpectrum(rfftfreq(frame_length, 1.0 / fs), spec)


def spectral_features(ps: PowerSpectrum) -> dict[str, float]:
    f, p = ps.freqs_hz.astype(np.float64), ps.power.astype(np.float64)
    total = float(p.sum())
    if not total > 0:
        raise DegenerateSpectrumError("spectrum carries no power")
    w = p / total
    centroid = float(np.sum(f * w))
    dev = f - centroid
    var = float(np.sum(dev**2 * w))
    spread = float(np.sqrt(var))
    if spread > 0:
        skew = float(np.sum(dev**3 * w) / spread**3)
        kurt = float(np.sum(dev**4 * w) / spread**4)
    else:
        skew = kurt = 0.0
    bandwidth = float(np.sqrt(np.sum(np.abs(dev) ** 2 * w)))

    cum = np.cumsum(p)
    rolloff = float(f[np.searchsorted(cum, ROLLOFF_FRACTION * total)])

    floor = np.finfo(np.float64).tiny + 1e-12 * float(p.max())
    pf = np.maximum(p, floor)
    flatness = float(min(1.0, np.exp(np.mean(np.log(pf))) / np.mean(pf)))

    fc = f - f.mean()
    denom = float(np.sum(fc**2))
    slope = float(np.sum(fc * (p - p.mean())) / denom) if denom > 0 else 0.0

    tail = p[1:]
    k = np.arange(1, len(p))
    tail_sum = float(tail.sum())
    decrease = float(np.sum((tail - p[0]) / k) / tail_sum) if tail_sum > 0 else 0.0

    return {
        "dominant_frequency_hz": float(f[int(np.argmax(p))]),
        "spectral_centroid_hz": centroid,
        "spectral_rolloff_hz": rolloff,
        "spectral_spread_hz": spread,
        "spectral_skewness": skew,
        "spectral_kurtosis": kurt,
        "spectral_bandwidth_hz": bandwidth,
        "spectral_flatness": flatness,
        "spectral_slope": slope,
        "spectral_decrease": decrease,
    }


def psd_band_powers(ps: PowerSpectrum, bands=PSD_BANDS_HZ) -> np.ndarray:
    f = ps.freqs_hz
    return np.array([float(ps.power[(f >= lo) & (f < hi)].sum()) for lo, hi in bands])


# -- mel / cepstral ---------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filterbank, shape ``(n_mels, n_fft // 2 + 1)``."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bins = rfftfreq(n_fft, 1.0 / sample_rate)
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lower) / (centre - lower)
    falling = (upper - bins[None, :]) / (upper - centre)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def _frame_power(seg, frame_length: int, hop: int) -> np.ndarray:
    x = np.asarray(seg.samples, dtype=np.float64)
    if len(x) == 0:
        raise DegenerateSegmentError("empty segment")
    win = np.hanning(frame_length + 1)[:-1]
    frames = frame_signal(x, frame_length, hop) * win
    return np.abs(rfft(frames, axis=1)) ** 2


def log_mel_energies(seg, params: MfccParams = MfccParams()) -> np.ndarray:
    """Per-frame log filterbank energies, shape ``(n_frames, n_mels_filterbank)``."""
    power = _frame_power(seg, params.frame_length, params.hop)
    fb = mel_filterbank(params.n_mels_filterbank, params.frame_length, seg.sample_rate_hz)
    return np.log(np.maximum(power @ fb.T, LOG_FLOOR))


def cepstrum(log_energies: np.ndarray) -> np.ndarray:
    """Orthonormal DCT-II along the last axis (all coefficients)."""
    return dct(log_energies, type=2, norm="ortho", axis=-1)


def mfcc_from_energies(energies: np.ndarray, n_coeffs: int = N_MFCC) -> np.ndarray:
    """MFCCs from raw (linear) filterbank energies, frames along axis 0."""
    return cepstrum(np.log(np.maximum(np.asarray(energies, dtype=np.float64), LOG_FLOOR)))[..., :n_coeffs]


def mfcc_means(seg, params: MfccParams = MfccParams()) -> np.ndarray:
    coeffs = cepstrum(log_mel_energies(seg, params))[:, : params.n_coeffs]
    return coeffs.mean(axis=0)


# -- aggregate vector -------------------------------------------------------

def feature_vector(seg, mfcc_params: MfccParams = MfccParams(), welch_frame: int = 1024, welch_overlap: float = 0.5) -> np.ndarray:
    """The 39 acoustic features in :data:`FEATURE_NAMES` order."""
    zcr, rms, crest, length = time_domain_features(seg)
    ps = power_spectrum(seg, welch_frame, welch_overlap)
    spectral = spectral_features(ps)
    vec = np.concatenate([
        [zcr, rms],
        [spectral[name] for name in SPECTRAL_NAMES],
        [crest],
        mfcc_means(seg, mfcc_params),
        [length],
        psd_band_powers(ps),
    ])
    if not np.all(np.isfinite(vec)):
        raise DegenerateSegmentError("non-finite feature value")
    return vec


def feature_dict(vec) -> dict[str, float]:
    if len(vec) != len(FEATURE_NAMES):
        raise ValueError(f"expected {len(FEATURE_NAMES)} values, got {len(vec)}")
    return dict(zip(FEATURE_NAMES, map(float, vec)))


# -- mel spectrogram image --------------------------------------------------

def _resize_axis(a: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = a.shape[axis]
    if n_in == 1:
        return np.repeat(a, n_out, axis=axis)
    pos = np.linspace(0.0, n_in - 1, n_out)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    a0 = np.take(a, lo, axis=axis)
    a1 = np.take(a, lo + 1, axis=axis)
    shape = [1] * a.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    return a0 * (1 - frac) + a1 * frac


def bilinear_resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    return _resize_axis(_resize_axis(img, height, 0), width, 1)


def mel_power(seg, params: MelImageParams = MelImageParams()) -> np.ndarray:
    """Mel power spectrogram, shape ``(n_mels, n_frames)``, low bands first."""
    power = _frame_power(seg, params.frame_length, params.hop)
    fb = mel_filterbank(params.n_mels, params.frame_length, seg.sample_rate_hz)
    return fb @ power.T


def mel_spectrogram_image(seg, params: MelImageParams = MelImageParams()) -> np.ndarray:
    """Grayscale mel-spectrogram raster of shape ``(size, size, 3)`` in [0, 1].

    Row 0 is the highest mel band. Silence produces an all-zero image.
    """
    mel = mel_power(seg, params)
    peak = float(mel.max())
    if not peak > 0:
        return np.zeros((params.size, params.size, 3), dtype=np.float32)
    db = 10.0 * np.log10(np.maximum(mel, peak * 10 ** (-params.top_db / 10)) / peak)
    lo, hi = float(db.min()), float(db.max())
    norm = (db - lo) / (hi - lo) if hi > lo else np.zeros_like(db)
    img = bilinear_resize(norm[::-1], params.size, params.size)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return np.repeat(img[:, :, None], 3, axis=2)


# -- file formats -----------------------------------------------------------

def write_raster(path, image: np.ndarray) -> None:
    """Portable float raster: ASCII ``H W C`` header line, then little-endian float32."""
    h, w, c = image.shape
    with open(path, "wb") as fh:
        fh.write(f"{h} {w} {c}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype="<f4").tobytes())


def read_raster(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        h, w, c = (int(v) for v in header)
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != h * w * c:
        raise ValueError(f"{path}: raster holds {data.size} values, header says {h * w * c}")
    return data.reshape(h, w, c).astype(np.float32)


def write_feature_table(path, rows) -> None:
    """``rows`` yields ``(subject_id, segment_idx, label, vector)``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "segment_idx", "label", *FEATURE_NAMES])
        for sid, idx, label, vec in rows:
            writer.writerow([sid, idx, label, *(repr(float(v)) for v in vec)])


def read_feature_table(path):
    """Inverse of :func:`write_feature_table`: ``(ids, segment_idx, labels, matrix)``."""
    ids, seg_idx, labels, rows = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[3:]) != FEATURE_NAMES:
            raise ValueError(f"{path}: feature columns do not match the schema")
        for row in reader:
            ids.append(row[0])
            seg_idx.append(int(row[1]))
            labels.append(row[2])
            rows.append([float(v) for v in row[3:]])
    return ids, seg_idx, labels, np.array(rows, dtype=np.float64).reshape(-1, len(FEATURE_NAMES))
