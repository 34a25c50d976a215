"""Synthetic cough corpora with a known, separable class structure.

"cancer" recordings contain harmonic tone bursts and "healthy" recordings
contain broadband noise bursts, each over a faint noise floor.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio_io import Label, Sex, Smoking, SubjectRecord, Waveform, write_manifest, write_wav


def _ramp_envelope(n, rate, ramp_ms=10.0):
    r = max(1, int(rate * ramp_ms / 1000))
    env = np.ones(n)
    env[:r] = np.linspace(0, 1, r)
    env[-r:] = np.linspace(1, 0, r)
    return env


def tone_burst(rng, rate, duration_s=0.3):
    n = int(rate * duration_s)
    t = np.arange(n) / rate
    f0 = rng.uniform(350, 550)
    x = sum(np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k for k in (1, 2, 3))
    return x / np.max(np.abs(x)) * _ramp_envelope(n, rate)


def noise_burst(rng, rate, duration_s=0.3):
    n = int(rate * duration_s)
    x = rng.standard_normal(n)
    return x / np.max(np.abs(x)) * _ramp_envelope(n, rate)


def synth_recording(rng, label: Label, rate=16000, n_coughs=2, burst_s=0.3, gap_s=1.5, lead_s=1.0):
    # coughs must stay well under a fifth of the frames for mu + 2 sigma onsets to fire
    total = lead_s * 2 + n_coughs * burst_s + (n_coughs - 1) * gap_s
    x = 0.001 * rng.standard_normal(int(total * rate))
    make = tone_burst if label is Label.CANCER else noise_burst
    for k in range(n_coughs):
        start = int((lead_s + k * (burst_s + gap_s)) * rate)
        burst = make(rng, rate, burst_s) * rng.uniform(0.5, 0.9)
        x[start : start + len(burst)] += burst
    return Waveform(np.clip(x, -1, 1), rate)


def make_synthetic_corpus(out_dir, n_subjects: int = 40, seed: int = 0, n_coughs: int = 2, rate: int = 16000) -> Path:
    """Write WAVs plus ``manifest.csv`` under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_subjects):
        label = Label.CANCER if i % 2 == 0 else Label.HEALTHY
        # overlapping age ranges so both age groups hold both classes
        age = int(rng.integers(50, 80) if label is Label.CANCER else rng.integers(30, 66))
        sex = Sex.MALE if (i // 2) % 2 == 0 else Sex.FEMALE
        smoking = list(Smoking)[int(rng.integers(0, 3))]
        sid = f"s{i:03d}"
        rel = f"audio/{sid}.wav"
        write_wav(out / rel, synth_recording(rng, label, rate, n_coughs))
        records.append(SubjectRecord(sid, label, age, sex, smoking, rel))
    manifest = out / "manifest.csv"
    write_manifest(manifest, records)
    return manifest
