"""WAV and manifest I/O.

Samples are always returned as float64 in [-1, 1] regardless of the on-disk
bit depth; stereo input is downmixed to mono by averaging channels.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

MANIFEST_COLUMNS = ("subject_id", "label", "age", "sex", "smoking", "audio_path")


class AudioError(Exception):
    """Base class for audio loading failures."""


class WavFormatError(AudioError):
    """The file is not a well-formed RIFF/WAVE container."""


class UnsupportedAudioError(AudioError):
    """The container is valid but the codec or layout is not handled."""


class EmptyAudioError(AudioError):
    """The data chunk holds no samples."""


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self):
        return len(self.samples)


class Label(str, Enum):
    HEALTHY = "healthy"
    CANCER = "cancer"

    @property
    def code(self) -> int:
        """Binary target: 1 for cancer (positive class), 0 for healthy."""
        return int(self is Label.CANCER)


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"


class Smoking(str, Enum):
    EVER = "ever"
    NEVER = "never"
    NOT_GIVEN = "not_given"


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    label: Label
    age_years: int
    sex: Sex
    smoking: Smoking
    audio_path: str


def _parse_fmt(chunk: bytes) -> tuple[int, int, int, int]:
    if len(chunk) < 16:
        raise WavFormatError("fmt chunk too short")
    fmt_tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", chunk[:16])
    if fmt_tag == WAVE_FORMAT_EXTENSIBLE:
        if len(chunk) < 40:
            raise WavFormatError("extensible fmt chunk too short")
        # first two bytes of the sub-format GUID carry the real format tag
        fmt_tag = struct.unpack("<H", chunk[24:26])[0]
    if channels == 0 or rate == 0 or block_align == 0:
        raise WavFormatError("fmt chunk declares zero channels, rate or block size")
    return fmt_tag, channels, rate, bits


def _decode(data: bytes, fmt_tag: int, channels: int, bits: int) -> np.ndarray:
    width = bits // 8
    frame = width * channels
    n_frames = len(data) // frame
    data = data[: n_frames * frame]
    if fmt_tag == WAVE_FORMAT_IEEE_FLOAT:
        if bits == 32:
            x = np.frombuffer(data, dtype="<f4").astype(np.float64)
        elif bits == 64:
            x = np.frombuffer(data, dtype="<f8").astype(np.float64)
        else:
            raise UnsupportedAudioError(f"{bits}-bit float samples")
    elif fmt_tag == WAVE_FORMAT_PCM:
        if bits == 8:
            x = (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
        elif bits == 16:
            x = np.frombuffer(data, dtype="<i2") / 32768.0
        elif bits == 24:
            raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
            ints = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
            ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
            x = ints / float(1 << 23)
        elif bits == 32:
            x = np.frombuffer(data, dtype="<i4") / float(1 << 31)
        else:
            raise UnsupportedAudioError(f"{bits}-bit integer PCM")
    else:
        raise UnsupportedAudioError(f"WAV format tag 0x{fmt_tag:04x}")
    return x.reshape(-1, channels)


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file into a mono :class:`Waveform`."""
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: missing RIFF/WAVE header")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        chunk_id = blob[pos : pos + 4]
        size = struct.unpack("<I", blob[pos + 4 : pos + 8])[0]
        body = blob[pos + 8 : pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(body)
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word aligned

    if fmt is None:
        raise WavFormatError(f"{path}: no fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: no data chunk")
    fmt_tag, channels, rate, bits = fmt
    if channels > 2:
        raise UnsupportedAudioError(f"{path}: {channels} channels")

    frames = _decode(data, fmt_tag, channels, bits)
    if frames.shape[0] == 0:
        raise EmptyAudioError(f"{path}: zero samples")
    return Waveform(frames.mean(axis=1), rate)


def write_wav(path, waveform: Waveform, bit_depth: int = 16, channels: np.ndarray | None = None) -> None:
    """Write ``waveform`` as PCM (8/16/24/32-bit int) or 32-bit float.

    ``bit_depth`` of ``"float"`` or ``-32`` selects IEEE float. ``channels`` may
    be a (n, 2) array to write a stereo file instead of the mono waveform.
    """
    x = waveform.samples[:, None] if channels is None else np.asarray(channels, dtype=np.float64)
    n_ch = x.shape[1]
    if bit_depth in ("float", -32):
        fmt_tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        fmt_tag, bits = WAVE_FORMAT_PCM, int(bit_depth)
        full = float(1 << (bits - 1))
        q = np.clip(np.round(x * full), -full, full - 1).astype(np.int64)
        if bits == 8:
            payload = (q + 128).astype(np.uint8).tobytes()
        elif bits == 16:
            payload = q.astype("<i2").tobytes()
        elif bits == 24:
            u = (q & 0xFFFFFF).astype("<u4")
            payload = u.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
        elif bits == 32:
            payload = q.astype("<i4").tobytes()
        else:
            raise UnsupportedAudioError(f"cannot write {bits}-bit PCM")

    block_align = n_ch * bits // 8
    fmt = struct.pack(
        "<HHIIHH", fmt_tag, n_ch, waveform.sample_rate_hz,
        waveform.sample_rate_hz * block_align, block_align, bits,
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def _parse_enum(enum_cls, token: str, field: str, line: int):
    try:
        return enum_cls(token.strip().lower())
    except ValueError:
        raise ManifestError(f"line {line}: unknown {field} {token!r}") from None


def load_manifest(path) -> list[SubjectRecord]:
    """Parse the corpus manifest CSV.

    Header must be ``subject_id,label,age,sex,smoking,audio_path``. A blank
    smoking cell maps to ``not_given``.
    """
    records: list[SubjectRecord] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(f.strip() for f in reader.fieldnames) != MANIFEST_COLUMNS:
            raise ManifestError(f"{path}: header must be {','.join(MANIFEST_COLUMNS)}")
        for line, row in enumerate(reader, start=2):
            sid = (row["subject_id"] or "").strip()
            if not sid:
                raise ManifestError(f"line {line}: empty subject_id")
            if sid in seen:
                raise ManifestError(f"line {line}: duplicate subject_id {sid!r}")
            seen.add(sid)
            if not (row["label"] or "").strip():
                raise ManifestError(f"line {line}: missing label")
            label = _parse_enum(Label, row["label"], "label", line)
            try:
                age = int((row["age"] or "").strip())
            except ValueError:
                raise ManifestError(f"line {line}: unparseable age {row['age']!r}") from None
            if age <= 0:
                raise ManifestError(f"line {line}: age must be positive")
            sex = _parse_enum(Sex, row["sex"] or "", "sex", line)
            smoking_token = (row["smoking"] or "").strip() or Smoking.NOT_GIVEN.value
            smoking = _parse_enum(Smoking, smoking_token, "smoking", line)
            records.append(SubjectRecord(sid, label, age, sex, smoking, (row["audio_path"] or "").strip()))
    return records


def write_manifest(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            smoking = "" if r.smoking is Smoking.NOT_GIVEN else r.smoking.value
            writer.writerow([r.subject_id, r.label.value, r.age_years, r.sex.value, smoking, r.audio_path])
