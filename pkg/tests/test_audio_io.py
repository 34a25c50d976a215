import struct

import numpy as np
import pytest

from coughscreen.audio_io import (
    EmptyAudioError, Label, ManifestError, Sex, Smoking, SubjectRecord, UnsupportedAudioError,
    Waveform, WavFormatError, load_manifest, read_wav, write_manifest, write_wav,
)

HEADER = "subject_id,label,age,sex,smoking,audio_path\n"


def test_full_scale_16bit_reads_as_32767_over_32768(tmp_path):
    p = tmp_path / "a.wav"
    write_wav(p, Waveform(np.ones(100), 8000), 16)
    w = read_wav(p)
    assert np.all(w.samples == 32767 / 32768)


def test_stereo_opposite_channels_downmix_to_zero(tmp_path):
    p = tmp_path / "s.wav"
    ch = np.column_stack([np.full(50, 0.5), np.full(50, -0.5)])
    write_wav(p, Waveform(np.zeros(50), 8000), 16, channels=ch)
    assert np.all(read_wav(p).samples == 0.0)


def test_sine_round_trip_within_one_lsb(tmp_path):
    t = np.arange(16000) / 16000
    x = 0.8 * np.sin(2 * np.pi * 440 * t)
    p = tmp_path / "sine.wav"
    write_wav(p, Waveform(x, 16000))
    w = read_wav(p)
    assert len(w.samples) == 16000 and w.sample_rate_hz == 16000
    assert abs(np.max(np.abs(w.samples)) - 0.8) <= 1 / 32768


@pytest.mark.parametrize("bits", [8, 16, 24, 32, "float"])
def test_round_trip_every_bit_depth(tmp_path, bits):
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.99, 0.99, 500)
    p = tmp_path / f"b{bits}.wav"
    write_wav(p, Waveform(x, 22050), bits)
    step = 2.0 ** -23 if bits == "float" else 2.0 ** (1 - int(bits))
    assert np.max(np.abs(read_wav(p).samples - x)) <= step


def test_downmix_is_channel_mean(tmp_path):
    rng = np.random.default_rng(2)
    left, right = rng.uniform(-1, 1, 300), rng.uniform(-1, 1, 300)
    for name, data in (("l", left), ("r", right)):
        write_wav(tmp_path / f"{name}.wav", Waveform(data, 8000), 24)
    write_wav(tmp_path / "lr.wav", Waveform(left, 8000), 24, channels=np.column_stack([left, right]))
    mixed = read_wav(tmp_path / "lr.wav").samples
    expect = (read_wav(tmp_path / "l.wav").samples + read_wav(tmp_path / "r.wav").samples) / 2
    np.testing.assert_allclose(mixed, expect, atol=1e-12)


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.wav"
    p.write_bytes(b"NOPE" + b"\0" * 40)
    with pytest.raises(WavFormatError):
        read_wav(p)


def test_unsupported_codec(tmp_path):
    p = tmp_path / "alaw.wav"
    fmt = struct.pack("<HHIIHH", 6, 1, 8000, 8000, 1, 8)  # A-law
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", 4) + b"\1\2\3\4"
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(UnsupportedAudioError):
        read_wav(p)


def test_zero_samples(tmp_path):
    p = tmp_path / "empty.wav"
    fmt = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", 0)
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(EmptyAudioError):
        read_wav(p)


def test_waveform_rejects_non_finite():
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]), 8000)


def test_manifest_row_parse(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(HEADER + "s1,cancer,71,male,ever,a.wav\ns2,healthy,40,female,,b.wav\n")
    r1, r2 = load_manifest(p)
    assert (r1.label, r1.age_years, r1.sex, r1.smoking) == (Label.CANCER, 71, Sex.MALE, Smoking.EVER)
    assert r2.smoking is Smoking.NOT_GIVEN


@pytest.mark.parametrize("rows", [
    "s1,cancer,71,male,ever,a.wav\ns1,healthy,50,male,never,b.wav\n",
    "s1,sick,71,male,ever,a.wav\n",
    "s1,cancer,seventy,male,ever,a.wav\n",
])
def test_manifest_errors(tmp_path, rows):
    p = tmp_path / "m.csv"
    p.write_text(HEADER + rows)
    with pytest.raises(ManifestError):
        load_manifest(p)


def test_manifest_group_sizes_227(tmp_path):
    records = [SubjectRecord(f"s{i}", Label.CANCER if i < 118 else Label.HEALTHY, 50, Sex.MALE, Smoking.NEVER, "x.wav") for i in range(227)]
    p = tmp_path / "m.csv"
    write_manifest(p, records)
    loaded = load_manifest(p)
    counts = (sum(r.label is Label.CANCER for r in loaded), sum(r.label is Label.HEALTHY for r in loaded))
    assert counts == (118, 109)
