"""Per-pixel reflection and azimuth angles from the horizon line.

The water surface is taken parallel to the plane through the camera centre
and the image horizon line. For a pixel R below the horizon:

* ``d_R``  perpendicular image distance from R to the horizon (R I4),
* ``s``    offset of R along the horizon from the foot F of the principal
           point's perpendicular (I2 I4),
* ``OF``   distance from the camera centre to the horizon line,
* ``OR``   distance from the camera centre to R.

Decomposing the ray O->R in the orthonormal frame (along horizon, towards F,
surface normal) gives

    x_n = f d_R / OF,   x_F = (f^2 - d_C (d_R - d_C)) / OF,   x_L = s

with ``d_C`` the signed horizon distance of the principal point. The
elevation of the ray below the horizon plane is atan2(x_n, hypot(x_L, x_F))
and its azimuth from the forward direction is atan2(x_L, x_F).
"""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    u_c: float
    v_c: float

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError("focal length must be positive")

    @classmethod
    def centered(cls, f, width, height) -> "CameraIntrinsics":
        return cls(float(f), (width - 1) / 2.0, (height - 1) / 2.0)

    def check_inside(self, width, height):
        if not (0 <= self.u_c <= width - 1 and 0 <= self.v_c <= height - 1):
            raise ValueError("principal point outside the image")


@dataclass(frozen=True, eq=False)
class AngleMaps:
    theta: np.ndarray
    psi: np.ndarray
    below_horizon: np.ndarray


def _oriented_line(horizon):
    if hasattr(horizon, "a"):
        a, b, c = horizon.a, horizon.b, horizon.c
    else:
        a, b, c = horizon
    n = np.hypot(a, b)
    if n == 0:
        raise ValueError("horizon line has zero normal")
    a, b, c = a / n, b / n, c / n
    if b < 0:  # ground (positive side) lies below the horizon
        a, b, c = -a, -b, -c
    return a, b, c


def _ray_frame(intr: CameraIntrinsics, horizon, u, v):
    a, b, c = _oriented_line(horizon)
    f = intr.f
    du = np.asarray(u, dtype=float) - intr.u_c
    dv = np.asarray(v, dtype=float) - intr.v_c
    d_c = a * intr.u_c + b * intr.v_c + c
    d_r = a * du + b * dv + d_c
    s = b * du - a * dv
    of = np.hypot(f, d_c)
    x_n = f * d_r / of
    x_f = (f * f - d_c * (d_r - d_c)) / of
    return d_r, s, x_f, x_n


def reflection_angle(intr: CameraIntrinsics, horizon, u, v):
    """Incidence angle on a horizontal surface seen at pixel (u, v)."""
    d_r, s, x_f, x_n = _ray_frame(intr, horizon, u, v)
    return np.pi / 2 - np.arctan2(x_n, np.hypot(s, x_f))


def azimuth_angle(intr: CameraIntrinsics, horizon, u, v):
    """Signed azimuth from the camera forward direction; positive to the right."""
    _, s, x_f, _ = _ray_frame(intr, horizon, u, v)
    return np.arctan2(s, x_f)


def _grid(width, height):
    v, u = np.mgrid[0:height, 0:width]
    return u.astype(float), v.astype(float)


def reflection_angle_map(intr: CameraIntrinsics, horizon, width, height):
    u, v = _grid(width, height)
    d_r, s, x_f, x_n = _ray_frame(intr, horizon, u, v)
    mask = d_r > 0
    theta = np.where(mask, np.pi / 2 - np.arctan2(x_n, np.hypot(s, x_f)), np.nan)
    return theta, mask


def azimuth_angle_map(intr: CameraIntrinsics, horizon, width, height):
    u, v = _grid(width, height)
    d_r, s, x_f, _ = _ray_frame(intr, horizon, u, v)
    return np.where(d_r > 0, np.arctan2(s, x_f), np.nan)


def angle_maps(intr: CameraIntrinsics, horizon, width, height) -> AngleMaps:
    u, v = _grid(width, height)
    d_r, s, x_f, x_n = _ray_frame(intr, horizon, u, v)
    mask = d_r > 0
    theta = np.where(mask, np.pi / 2 - np.arctan2(x_n, np.hypot(s, x_f)), np.nan)
    psi = np.where(mask, np.arctan2(s, x_f), np.nan)
    return AngleMaps(theta, psi, mask)


def cosine_rule_reflection_angle(intr: CameraIntrinsics, horizon, u, v):
    """Reflection angle from the in-image triangle R, I4, O via the cosine rule.

    Matches :func:`reflection_angle` only when the horizon passes through the
    principal point; with camera pitch it measures the angle to I4 rather
    than to the ray's projection on the horizon plane.
    """
    a, b, c = _oriented_line(horizon)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    omega = np.arctan2(-a, b)
    v_i3 = -(a * u + c) / b
    ri4 = (v - v_i3) * np.cos(omega)
    u_i4 = u + ri4 * np.sin(omega)
    v_i4 = v - ri4 * np.cos(omega)
    f = intr.f
    o_r = np.sqrt(f ** 2 + (intr.u_c - u) ** 2 + (intr.v_c - v) ** 2)
    o_i4 = np.sqrt(f ** 2 + (intr.u_c - u_i4) ** 2 + (intr.v_c - v_i4) ** 2)
    cos_alpha = (o_r ** 2 + o_i4 ** 2 - ri4 ** 2) / (2 * o_r * o_i4)
    return np.pi / 2 - np.arccos(np.clip(cos_alpha, -1.0, 1.0))


def planar_azimuth_angle(intr: CameraIntrinsics, horizon, u, v):
    """Azimuth as atan(I2I4 / OI2); exact only for a horizon through the principal point."""
    a, b, c = _oriented_line(horizon)
    du = np.asarray(u, dtype=float) - intr.u_c
    dv = np.asarray(v, dtype=float) - intr.v_c
    # CR cos(eta - omega) is the component of CR along the horizon
    along = b * du - a * dv
    ci2 = a * intr.u_c + b * intr.v_c + c
    return np.arctan(along / np.sqrt(intr.f ** 2 + ci2 ** 2))


class AngleMapCache:
    """Angle maps keyed on the horizon snapped to a 1e-3 grid.

    Maps are built from the snapped line itself, so the result for a given
    horizon never depends on which frame populated the cache first.
    """

    def __init__(self, maxsize=16, resolution=1e-3):
        self.maxsize = maxsize
        self.resolution = resolution
        self._store: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def snap(self, horizon):
        a, b, c = _oriented_line(horizon)
        q = self.resolution
        return tuple(float(np.round(x / q) * q) for x in (a, b, c))

    def get(self, intr: CameraIntrinsics, horizon, width, height) -> AngleMaps:
        line = self.snap(horizon)
        key = (line, intr, int(width), int(height))
        with self._lock:
            if key in self._store:
                self._store.move_to_end(key)
                self.hits += 1
                return self._store[key]
        maps = angle_maps(intr, line, width, height)
        for arr in (maps.theta, maps.psi, maps.below_horizon):
            arr.setflags(write=False)
        with self._lock:
            self.misses += 1
            self._store[key] = maps
            while len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        return maps


def write_angle_png(angle_map, path, lo=-np.pi / 2, hi=np.pi / 2):
    """Debug export: angle scaled linearly from [lo, hi] to 0..255, NaN as 0."""
    scaled = (np.nan_to_num(angle_map, nan=lo) - lo) / (hi - lo)
    Image.fromarray(np.clip(np.round(scaled * 255), 0, 255).astype(np.uint8)).save(path)
