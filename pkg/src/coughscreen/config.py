"""Pipeline configuration.

Config files are flat TOML with dotted keys, e.g.::

    seed = 7
    manifest = "corpus/manifest.csv"
    preprocess.target_rate_hz = 12000
    cnn.max_epochs = 50
    grid.lr = [{l2 = 0.1}, {l2 = 1.0}]
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .features import MelImageParams, MfccParams
from .ml.selection import DEFAULT_GRIDS
from .preprocess import PreprocessParams
from .segment import SegmenterParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SplitParams:
    test_fraction: float = 0.10
    val_fraction: float = 0.30
    cv_folds: int = 5


@dataclass(frozen=True)
class FeatureParams:
    welch_frame: int = 1024
    welch_overlap: float = 0.5
    correlation_threshold: float = 0.8


@dataclass(frozen=True)
class CnnParams:
    enabled: bool = True
    max_epochs: int = 200
    batch_size: int = 16
    lr: float = 0.001
    patience: int = 15
    cv_folds: int = 5


@dataclass(frozen=True)
class ShapParams:
    background: int = 100
    n_coalitions: int = 2048
    max_instances: int = 0  # 0 = explain every test segment


@dataclass(frozen=True)
class FairnessParams:
    age_threshold: int = 58


SECTIONS = {
    "preprocess": PreprocessParams,
    "segment": SegmenterParams,
    "mfcc": MfccParams,
    "mel": MelImageParams,
    "split": SplitParams,
    "features": FeatureParams,
    "cnn": CnnParams,
    "shap": ShapParams,
    "fairness": FairnessParams,
}


@dataclass(frozen=True)
class PipelineConfig:
    manifest: str = ""
    output_dir: str = "run"
    seed: int = 0
    families: tuple[str, ...] = ("svm", "lr", "gbt")
    preprocess: PreprocessParams = PreprocessParams()
    segment: SegmenterParams = SegmenterParams()
    mfcc: MfccParams = MfccParams()
    mel: MelImageParams = MelImageParams()
    split: SplitParams = SplitParams()
    features: FeatureParams = FeatureParams()
    cnn: CnnParams = CnnParams()
    shap: ShapParams = ShapParams()
    fairness: FairnessParams = FairnessParams()
    grid: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRIDS.items()})

    def __post_init__(self):
        for name in ("test_fraction", "val_fraction"):
            v = getattr(self.split, name)
            if not 0 < v < 1:
                raise ConfigError(f"split.{name} must lie in (0, 1), got {v}")
        if self.seed is None:
            raise ConfigError("seed is required")
        unknown = set(self.families) - set(DEFAULT_GRIDS)
        if unknown:
            raise ConfigError(f"unknown model families {sorted(unknown)}")
        for fam in self.families:
            if not self.grid.get(fam):
                raise ConfigError(f"grid for {fam!r} is empty")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _build_section(cls, values: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(values) - known
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def config_from_dict(raw: dict, **overrides) -> PipelineConfig:
    raw = {**raw}
    kwargs = {}
    for name, cls in SECTIONS.items():
        if name in raw:
            section = raw.pop(name)
            if not isinstance(section, dict):
                raise ConfigError(f"{name} must be a table of keys")
            kwargs[name] = _build_section(cls, section, name)
    if "grid" in raw:
        grid = {k: list(v) for k, v in DEFAULT_GRIDS.items()}
        grid.update({k: list(v) for k, v in raw.pop("grid").items()})
        kwargs["grid"] = grid
    if "families" in raw:
        kwargs["families"] = tuple(raw.pop("families"))
    for key in ("manifest", "output_dir", "seed"):
        if key in raw:
            kwargs[key] = raw.pop(key)
    if raw:
        raise ConfigError(f"unknown top-level keys: {sorted(raw)}")
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**kwargs)


def load_config(path=None, **overrides) -> PipelineConfig:
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = Path(path).parent
        if raw.get("manifest") and not Path(raw["manifest"]).is_absolute():
            raw["manifest"] = str(base / raw["manifest"])
    return config_from_dict(raw, **overrides)
