"""Recording conditioning: peak normalisation, zero-phase low-pass, decimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .audio_io import UnsupportedAudioError, Waveform


class PreprocessError(ValueError):
    pass


class SilentAudioError(PreprocessError):
    pass


@dataclass(frozen=True)
class PreprocessParams:
    target_rate_hz: int = 12000
    lowpass_cutoff_hz: float = 5800.0
    lowpass_order: int = 4
    target_peak: float = 0.9

    def __post_init__(self):
        if not 0 < self.target_peak <= 1:
            raise PreprocessError(f"target_peak must be in (0, 1], got {self.target_peak}")
        if not self.lowpass_cutoff_hz < self.target_rate_hz / 2:
            raise PreprocessError("lowpass cutoff must lie below the target Nyquist frequency")


def normalize_loudness(w: Waveform, target_peak: float = 0.9) -> Waveform:
    peak = float(np.max(np.abs(w.samples)))
    if peak == 0.0:
        raise SilentAudioError("cannot normalise an all-zero recording")
    return Waveform(w.samples * (target_peak / peak), w.sample_rate_hz)


def lowpass_filter(w: Waveform, cutoff_hz: float = 5800.0, order: int = 4) -> Waveform:
    """Butterworth low-pass applied forward and backward (zero phase).

    The effective magnitude response is the squared single-pass response.
    """
    nyquist = w.sample_rate_hz / 2
    if not 0 < cutoff_hz < nyquist:
        raise PreprocessError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz")
    sos = signal.butter(order, cutoff_hz, btype="low", fs=w.sample_rate_hz, output="sos")
    n = len(w.samples)
    # sosfiltfilt's default edge padding needs more samples than very short clips have
    padlen = min(3 * (2 * len(sos) + 1), n - 1)
    y = signal.sosfiltfilt(sos, w.samples, padlen=max(padlen, 0))
    return Waveform(y, w.sample_rate_hz)


def _kaiser_sinc_resample(x: np.ndarray, src: int, dst: int, half_width: int, beta: float) -> np.ndarray:
    ratio = dst / src
    n_out = int(round(len(x) * ratio))
    # half_width counts zero crossings of the (output-rate) sinc
    reach = int(math.ceil(half_width / ratio))
    t = np.arange(n_out) * (src / dst)
    base = np.floor(t).astype(np.int64)
    offsets = np.arange(-reach, reach + 1)
    idx = base[:, None] + offsets[None, :]
    dist = t[:, None] - idx
    kernel = ratio * np.sinc(ratio * dist)
    window_arg = dist * ratio / half_width
    inside = np.abs(window_arg) <= 1.0
    window = np.where(inside, np.i0(beta * np.sqrt(np.clip(1.0 - window_arg**2, 0.0, None))) / np.i0(beta), 0.0)
    taps = kernel * window
    valid = (idx >= 0) & (idx < len(x))
    gathered = np.where(valid, x[np.clip(idx, 0, len(x) - 1)], 0.0)
    return np.sum(gathered * taps, axis=1)


def resample(w: Waveform, target_rate_hz: int, half_width: int = 32, beta: float = 8.0) -> Waveform:
    """Kaiser-windowed sinc decimation; the filter cutoff sits at the target Nyquist."""
    src = w.sample_rate_hz
    if target_rate_hz == src:
        return Waveform(w.samples.copy(), src)
    if target_rate_hz > src:
        raise UnsupportedAudioError(f"upsampling {src} Hz -> {target_rate_hz} Hz is not supported")
    y = _kaiser_sinc_resample(w.samples, src, target_rate_hz, half_width, beta)
    return Waveform(y, target_rate_hz)


def preprocess(w: Waveform, params: PreprocessParams = PreprocessParams()) -> Waveform:
    """Full conditioning chain.

    Low-pass and decimation run first and peak normalisation last, so the
    output always has the requested peak. The low-pass guards decimation
    against aliasing; a recording already at the target rate skips it, which
    makes the chain idempotent.
    """
    if w.sample_rate_hz < params.target_rate_hz:
        raise UnsupportedAudioError(f"recording at {w.sample_rate_hz} Hz is below the {params.target_rate_hz} Hz target")
    x = w
    if w.sample_rate_hz != params.target_rate_hz:
        x = lowpass_filter(w, params.lowpass_cutoff_hz, params.lowpass_order)
        x = resample(x, params.target_rate_hz)
    return normalize_loudness(x, params.target_peak)
