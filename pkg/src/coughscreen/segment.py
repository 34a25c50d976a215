"""Cough event detection with a hysteresis comparator on the RMS envelope."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .audio_io import Waveform


@dataclass(frozen=True)
class SegmenterParams:
    frame_ms: float = 10.0
    onset_k: float = 2.0
    offset_k: float = 0.5
    min_cough_ms: float = 200.0
    merge_gap_ms: float = 100.0
    pad_ms: float = 50.0

    def __post_init__(self):
        if not self.onset_k > self.offset_k:
            raise ValueError("onset_k must exceed offset_k")
        if self.min_cough_ms <= 0:
            raise ValueError("min_cough_ms must be positive")
        if self.frame_ms <= 0:
            raise ValueError("frame_ms must be positive")


@dataclass(frozen=True)
class CoughSegment:
    subject_id: str
    start_sample: int
    end_sample: int
    samples: np.ndarray = field(repr=False)
    sample_rate_hz: int

    def __post_init__(self):
        if not self.start_sample < self.end_sample:
            raise ValueError("segment must have start < end")
        if len(self.samples) != self.end_sample - self.start_sample:
            raise ValueError("segment samples do not match its bounds")

    @property
    def duration_s(self) -> float:
        return (self.end_sample - self.start_sample) / self.sample_rate_hz

    @classmethod
    def from_waveform(cls, w: Waveform, subject_id: str = "") -> "CoughSegment":
        """Wrap a whole waveform as one segment (handy for feature extraction)."""
        return cls(subject_id, 0, len(w.samples), w.samples, w.sample_rate_hz)


def rms_envelope(x: np.ndarray, frame_len: int) -> np.ndarray:
    """Per-frame RMS over non-overlapping frames; the last partial frame is kept."""
    n_frames = -(-len(x) // frame_len)
    padded = np.zeros(n_frames * frame_len)
    padded[: len(x)] = x
    return np.sqrt(np.mean(padded.reshape(n_frames, frame_len) ** 2, axis=1))


def _hysteresis_events(env: np.ndarray, on: float, off: float) -> list[tuple[int, int]]:
    events = []
    active = False
    start = 0
    for i, e in enumerate(env):
        if not active and e > on:
            active, start = True, i
        elif active and e < off:
            events.append((start, i))
            active = False
    if active:
        events.append((start, len(env)))
    return events


def segment_coughs(w: Waveform, params: SegmenterParams = SegmenterParams(), subject_id: str = "") -> list[CoughSegment]:
    """Split a preprocessed recording into cough events.

    Thresholds are relative to the envelope's mean and standard deviation
    over the whole recording, so scaling the input leaves the boundaries
    unchanged. Silence (zero envelope variance) yields no segments.
    """
    rate = w.sample_rate_hz
    frame_len = max(1, int(round(params.frame_ms * rate / 1000)))
    env = rms_envelope(w.samples, frame_len)
    mu, sigma = float(env.mean()), float(env.std())
    if sigma == 0.0:
        return []
    events = _hysteresis_events(env, mu + params.onset_k * sigma, mu + params.offset_k * sigma)

    # frame indices -> sample indices
    spans = [(a * frame_len, min(b * frame_len, len(w.samples))) for a, b in events]

    merge_gap = params.merge_gap_ms * rate / 1000
    merged: list[list[int]] = []
    for a, b in spans:
        if merged and a - merged[-1][1] < merge_gap:
            merged[-1][1] = b
        else:
            merged.append([a, b])

    min_len = params.min_cough_ms * rate / 1000
    pad = int(round(params.pad_ms * rate / 1000))
    out = []
    prev_end = 0
    for a, b in merged:
        if b - a < min_len:
            continue
        start = max(0, a - pad, prev_end)
        end = min(len(w.samples), b + pad)
        out.append(CoughSegment(subject_id, start, end, w.samples[start:end], rate))
        prev_end = end
    return out


def write_segment_report(path, segments) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "start_s", "end_s"])
        for s in segments:
            writer.writerow([s.subject_id, f"{s.start_sample / s.sample_rate_hz:.6f}", f"{s.end_sample / s.sample_rate_hz:.6f}"])
