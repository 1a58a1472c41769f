"""Pipeline configuration with validated JSON round-trips."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .features import FEATURE_SETS, FeatureSet
from .stereo import StereoParams


def _check_type(path, value, default):
    """Field types follow the defaults; None defaults accept numbers."""
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float) or default is None:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        ok = ok or (default is None and value is None)
    elif isinstance(default, str):
        ok = isinstance(value, str)
    else:
        ok = True
    if not ok:
        raise ConfigError(path, f"expected {type(default).__name__ if default is not None else 'number'}, "
                                f"got {type(value).__name__}")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class RoiConfig:
    horizon_row: float | None = None   # None: principal point row
    apex_offset: float = 0.15          # fraction of image height below the horizon row
    base_margin: float = 0.1           # fraction of width left out at each bottom corner


@dataclass(frozen=True)
class PipelineConfig:
    stereo: StereoParams = field(default_factory=lambda: StereoParams(max_disparity=32))
    roi: RoiConfig = field(default_factory=RoiConfig)
    cauchy_scale: float = 1.0
    adaptive_scale: bool = True
    plane_inlier_threshold: float = 1.0
    warp_mode: str = "bilinear"
    gmm_clusters: int = 5
    covariance: str = "full"
    feature_set: str = "with-azimuth"
    abs_azimuth: bool = False
    use_hue: bool = False
    threshold: float = 1.0
    max_samples_per_class: int = 60000
    gmm_max_iter: int = 300
    gmm_tol: float = 1e-6
    false_alarm_budget: float = 0.05
    range_bin_width: float = 5.0
    range_max: float = 105.0
    seed: int = 0

    def __post_init__(self):
        checks = [
            ("cauchy_scale", self.cauchy_scale > 0, "must be > 0"),
            ("plane_inlier_threshold", self.plane_inlier_threshold > 0, "must be > 0"),
            ("warp_mode", self.warp_mode in ("bilinear", "nearest"), "must be 'bilinear' or 'nearest'"),
            ("gmm_clusters", 1 <= self.gmm_clusters <= 64, "must be in [1, 64]"),
            ("covariance", self.covariance in ("full", "diag"), "must be 'full' or 'diag'"),
            ("feature_set", self.feature_set in FEATURE_SETS, f"must be one of {sorted(FEATURE_SETS)}"),
            ("threshold", self.threshold >= 0, "must be >= 0"),
            ("max_samples_per_class", self.max_samples_per_class >= 100, "must be >= 100"),
            ("gmm_max_iter", self.gmm_max_iter >= 1, "must be >= 1"),
            ("gmm_tol", self.gmm_tol > 0, "must be > 0"),
            ("false_alarm_budget", 0 <= self.false_alarm_budget <= 1, "must be in [0, 1]"),
            ("range_bin_width", self.range_bin_width > 0, "must be > 0"),
            ("range_max", self.range_max > self.range_bin_width, "must exceed range_bin_width"),
            ("roi.apex_offset", 0 <= self.roi.apex_offset < 1, "must be in [0, 1)"),
            ("roi.base_margin", 0 <= self.roi.base_margin < 0.5, "must be in [0, 0.5)"),
        ]
        for path, ok, msg in checks:
            if not ok:
                raise ConfigError(path, msg)

    @property
    def features(self) -> FeatureSet:
        return FeatureSet(self.feature_set, use_hue=self.use_hue, abs_azimuth=self.abs_azimuth)

    def range_edges(self):
        n = int(round(self.range_max / self.range_bin_width))
        return [i * self.range_bin_width for i in range(n + 1)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        doc = dict(doc)
        nested = {"stereo": StereoParams, "roi": RoiConfig}
        kwargs = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for key, value in doc.items():
            if key not in names:
                raise ConfigError(key, "unknown field")
            if key in nested:
                sub = nested[key]
                if not isinstance(value, dict):
                    raise ConfigError(key, "must be an object")
                sub_names = {f.name for f in dataclasses.fields(sub)}
                for k in value:
                    if k not in sub_names:
                        raise ConfigError(f"{key}.{k}", "unknown field")
                    _check_type(f"{key}.{k}", value[k], getattr(sub(), k))
                try:
                    value = sub(**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(key, str(exc)) from None
            else:
                _check_type(key, value, getattr(cls, key))
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError("<root>", str(exc)) from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]
