"""Per-pixel polarization features on ground-plane correspondences."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AngleMaps
from .stereo import WarpedPair

# all columns produced by extract_features, in storage order
COLUMNS = ("sat_left", "sat_right", "value_left", "theta", "psi", "hue_left")

FEATURE_SETS = {
    "with-azimuth": ("sat_left", "sat_right", "value_left", "theta", "psi"),
    "without-azimuth": ("sat_left", "sat_right", "value_left", "theta"),
}


@dataclass(frozen=True)
class FeatureSet:
    """Which columns feed the classifier.

    ``abs_azimuth`` folds psi to |psi| for scenes that are left/right symmetric.
    """
    name: str = "with-azimuth"
    use_hue: bool = False
    abs_azimuth: bool = False

    def __post_init__(self):
        if self.name not in FEATURE_SETS:
            raise ValueError(f"unknown feature set {self.name!r}; expected one of {sorted(FEATURE_SETS)}")

    @property
    def columns(self) -> tuple[str, ...]:
        cols = FEATURE_SETS[self.name]
        return cols + ("hue_left",) if self.use_hue else cols

    @property
    def dim(self) -> int:
        return len(self.columns)

    @property
    def descriptor(self) -> str:
        tag = self.name
        if self.abs_azimuth and "psi" in self.columns:
            tag += "+abs"
        if self.use_hue:
            tag += "+hue"
        return tag

    @classmethod
    def from_descriptor(cls, text: str) -> "FeatureSet":
        parts = text.split("+")
        return cls(parts[0], use_hue="hue" in parts[1:], abs_azimuth="abs" in parts[1:])


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV for floats in [0, 1]; hue also in [0, 1)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    sat = np.divide(delta, mx, out=np.zeros_like(mx), where=mx > 0)

    safe = np.where(delta > 0, delta, 1.0)
    rc, gc, bc = (mx - r) / safe, (mx - g) / safe, (mx - b) / safe
    hue = np.where(r == mx, bc - gc, np.where(g == mx, 2.0 + rc - bc, 4.0 + gc - rc))
    hue = np.where(delta > 0, (hue / 6.0) % 1.0, 0.0)
    return np.stack([hue, sat, mx], axis=-1)


@dataclass
class FeatureMap:
    values: np.ndarray      # H x W x len(COLUMNS)
    valid: np.ndarray       # below horizon and covered by the warp

    @property
    def shape(self):
        return self.valid.shape

    def column(self, name: str) -> np.ndarray:
        return self.values[..., COLUMNS.index(name)]

    def matrix(self, feature_set: FeatureSet, where: np.ndarray | None = None) -> np.ndarray:
        """N x d samples for the valid pixels (optionally restricted further by ``where``)."""
        sel = self.valid if where is None else self.valid & where
        idx = [COLUMNS.index(c) for c in feature_set.columns]
        x = self.values[sel][:, idx]
        if feature_set.abs_azimuth and "psi" in feature_set.columns:
            j = feature_set.columns.index("psi")
            x[:, j] = np.abs(x[:, j])
        return x


def extract_features(warped: WarpedPair, angles: AngleMaps) -> FeatureMap:
    if warped.left.shape[:2] != angles.theta.shape:
        raise ValueError(f"warped pair {warped.left.shape[:2]} and angle maps {angles.theta.shape} differ")
    hsv_l = rgb_to_hsv(warped.left)
    hsv_r = rgb_to_hsv(warped.right_warped)
    valid = warped.coverage & angles.below_horizon & np.isfinite(angles.theta)

    for name, arr in (("sat_left", hsv_l[..., 1]), ("sat_right", hsv_r[..., 1]), ("value_left", hsv_l[..., 2])):
        a = arr[valid]
        if a.size and (a.min() < 0.0 or a.max() > 1.0):
            raise ValueError(f"{name} outside [0, 1]; images must be normalized first")

    values = np.stack([hsv_l[..., 1], hsv_r[..., 1], hsv_l[..., 2],
                       np.where(valid, angles.theta, 0.0), np.where(valid, angles.psi, 0.0),
                       hsv_l[..., 0]], axis=-1)
    return FeatureMap(values, valid)
