"""Synthetic polarized stereo frames of a flat road with puddles.

World frame: x right, y up, z forward (direction of travel), ground at y = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .optics import (AIR_WATER, ETA_MAX, WaterColumn, exit_radiance, polarization_degree,
                     sky_radiance_for_view)
from .stereo import GroundPlane, HorizonLine, PolarizedStereoFrame, horizon_line

POLARIZER_TRANSMITTANCE = 0.42
UP = np.array([0.0, 1.0, 0.0])

MASK_WATER = 255
MASK_DRY = 0
MASK_IGNORE = 128


@dataclass(frozen=True)
class CameraSpec:
    width: int = 480
    height: int = 270
    focal_length: float | None = None   # default keeps the 720 px / 1280 px field of view
    baseline: float = 0.12
    mount_height: float = 1.77
    pitch_deg: float = 2.0              # positive tilts the optical axis down
    roll_deg: float = 0.0
    x: float = 0.0
    z: float = 0.0
    principal_point: tuple[float, float] | None = None

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("image too small")
        if self.f <= 0 or self.baseline <= 0 or self.mount_height <= 0:
            raise ValueError("focal length, baseline and mount height must be positive")
        if not -30 < self.pitch_deg < 60 or not -45 < self.roll_deg < 45:
            raise ValueError("pitch/roll out of range")

    @property
    def f(self) -> float:
        return self.focal_length if self.focal_length is not None else 0.5625 * self.width

    @property
    def center(self) -> tuple[float, float]:
        if self.principal_point is not None:
            return tuple(self.principal_point)
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def axes(self) -> np.ndarray:
        """Rows: image-right, image-down, optical axis, in world coordinates."""
        p, r = np.radians(self.pitch_deg), np.radians(self.roll_deg)
        right = np.array([1.0, 0.0, 0.0])
        down = np.array([0.0, -np.cos(p), -np.sin(p)])
        fwd = np.array([0.0, -np.sin(p), np.cos(p)])
        return np.array([np.cos(r) * right + np.sin(r) * down,
                         -np.sin(r) * right + np.cos(r) * down, fwd])

    def position(self) -> np.ndarray:
        return np.array([self.x, self.mount_height, self.z])


@dataclass(frozen=True)
class Puddle:
    x: float
    z: float
    semi_x: float
    semi_z: float
    angle_deg: float = 0.0
    mu_absorption: tuple[float, float, float] = (0.55, 0.6, 0.7)
    bottom_share: float = 0.5

    def __post_init__(self):
        if self.semi_x <= 0 or self.semi_z <= 0:
            raise ValueError("puddle axes must be positive")

    @property
    def column(self) -> WaterColumn:
        return WaterColumn.from_absorption(np.asarray(self.mu_absorption, float), self.bottom_share)

    def contains(self, x, z):
        a = np.radians(self.angle_deg)
        dx, dz = x - self.x, z - self.z
        px = np.cos(a) * dx + np.sin(a) * dz
        pz = -np.sin(a) * dx + np.cos(a) * dz
        return (px / self.semi_x) ** 2 + (pz / self.semi_z) ** 2 <= 1.0


@dataclass(frozen=True)
class GroundTexture:
    base_rgb: tuple[float, float, float] = (0.30, 0.28, 0.25)
    contrast: float = 0.8
    octaves: int = 7
    wavelength: float = 4.0   # metres, coarsest octave
    persistence: float = 1.0
    tint: float = 0.015       # per-channel low-frequency variation
    texture_seed: int = 0


@dataclass(frozen=True)
class SceneSpec:
    camera: CameraSpec = field(default_factory=CameraSpec)
    theta_sun_deg: float = 45.0
    sun_azimuth_deg: float = 30.0      # from the forward axis towards the right
    eta_max: float = ETA_MAX
    sky_rgb: tuple[float, float, float] = (0.45, 0.62, 0.95)
    ground_light: float = 2.0
    ground: GroundTexture = field(default_factory=GroundTexture)
    puddles: tuple[Puddle, ...] = ()
    horizon_haze: float = 0.5          # whitening of the sky towards the horizon
    exposure: float = 2.8
    noise_sigma: float = 0.008         # fraction of full scale
    supersample: int = 4               # per-axis samples on puddle and horizon edges
    blur_sigma: float = 1.0            # lens point-spread function, pixels
    seed: int = 0
    # (degree, direction angle to the reflection-plane normal) replacing the
    # Rayleigh sky for puddle reflections
    sky_polarization: tuple[float, float] | None = None

    def __post_init__(self):
        if not 0 <= self.theta_sun_deg <= 90:
            raise ValueError("sun zenith angle must be in [0, 90] degrees")
        if not 0 <= self.eta_max <= 1:
            raise ValueError("eta_max must be in [0, 1]")
        if self.noise_sigma < 0 or self.exposure <= 0:
            raise ValueError("noise must be >= 0 and exposure > 0")
        if not 0 <= self.horizon_haze <= 1 or self.supersample < 1 or self.blur_sigma < 0:
            raise ValueError("need horizon_haze in [0, 1], supersample >= 1, blur_sigma >= 0")
        object.__setattr__(self, "puddles", tuple(self.puddles))

    @property
    def sun(self) -> np.ndarray:
        ts, az = np.radians(self.theta_sun_deg), np.radians(self.sun_azimuth_deg)
        return np.array([np.sin(ts) * np.sin(az), np.cos(ts), np.sin(ts) * np.cos(az)])


@dataclass
class SyntheticFrame:
    frame: PolarizedStereoFrame
    mask: np.ndarray          # uint8, MASK_WATER / MASK_DRY
    disparity: np.ndarray     # true ground disparity, NaN off the ground
    plane: GroundPlane
    horizon: HorizonLine
    extras: dict = field(default_factory=dict)


def _hash_uniform(ix, iz, seed):
    """Deterministic lattice values in [0, 1) (splitmix64 finalizer)."""
    h = (ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
         ^ iz.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
         ^ np.uint64(seed * 0x165667B19E3779F9 % (1 << 64)))
    h ^= h >> np.uint64(30)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(27)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def value_noise(x, z, seed):
    fx, fz = np.floor(x), np.floor(z)
    ix, iz = fx.astype(np.int64), fz.astype(np.int64)
    tx, tz = x - fx, z - fz
    tx, tz = tx * tx * (3 - 2 * tx), tz * tz * (3 - 2 * tz)
    v00 = _hash_uniform(ix, iz, seed)
    v10 = _hash_uniform(ix + 1, iz, seed)
    v01 = _hash_uniform(ix, iz + 1, seed)
    v11 = _hash_uniform(ix + 1, iz + 1, seed)
    top = v00 + (v10 - v00) * tx
    bot = v01 + (v11 - v01) * tx
    return 2.0 * (top + (bot - top) * tz) - 1.0


def ground_albedo(tex: GroundTexture, x, z, footprint):
    """Albedo (n, 3) at ground points; octaves finer than the pixel footprint fade out."""
    lum = np.zeros_like(x)
    amp, lam, norm = 1.0, tex.wavelength, 0.0
    for k in range(tex.octaves):
        fade = np.clip(lam / footprint / 2.0 - 1.0, 0.0, 1.0)
        lum += amp * fade * value_noise(x / lam, z / lam, tex.texture_seed * 131 + k)
        norm += amp
        amp *= tex.persistence
        lam *= 0.5
    lum /= norm
    base = np.asarray(tex.base_rgb, dtype=float)
    out = base * (1.0 + tex.contrast * lum)[:, None]
    for c in range(3):
        out[:, c] += tex.tint * value_noise(x / 7.0, z / 7.0, tex.texture_seed * 131 + 97 + c)
    return np.clip(out, 0.0, 1.0)


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def sky_model(spec: SceneSpec, k):
    """Radiance (n, 3), polarization degree (n,) and E-vector (n, 3) of the sky
    seen along unit directions ``k``."""
    sun = spec.sun
    cos_g = np.clip(k @ sun, -1.0, 1.0)
    gamma = np.arccos(cos_g)
    eta = polarization_degree(gamma, spec.eta_max)
    up = np.clip(k[:, 1], 0.0, 1.0)
    lum = 0.75 * (1.0 + cos_g ** 2) * (1.0 + 0.6 * (1.0 - up))
    rgb = np.asarray(spec.sky_rgb, dtype=float)
    haze = (spec.horizon_haze * np.exp(-up / 0.1))[:, None]
    colour = (1.0 - haze) * rgb + haze * 1.1 * rgb.mean()
    radiance = colour * lum[:, None]
    evec = np.cross(k, sun)
    small = np.linalg.norm(evec, axis=1) < 1e-12
    if small.any():
        evec[small] = np.cross(k[small], [1.0, 0.0, 0.0])
    return radiance, np.where(small, 0.0, eta), _unit(evec)


def _polarizer_gain(k, axis, evec):
    """cos^2 between a transverse E-vector and the polarizer axis seen along k."""
    a = axis[None, :] - (k @ axis)[:, None] * k
    a = _unit(a)
    return np.einsum("ij,ij->i", evec, a) ** 2


def _pixel_rays(cam: CameraSpec, axes, pix_u, pix_v):
    uc, vc = cam.center
    d = (axes[0][None] * (pix_u - uc)[:, None] + axes[1][None] * (pix_v - vc)[:, None]
         + axes[2][None] * cam.f)
    return _unit(d)


def _surface_label(spec: SceneSpec, origin, k):
    """-2 sky, -1 dry ground, else the index of the puddle hit."""
    out = np.full(k.shape[0], -2)
    ground = k[:, 1] < -1e-9
    t = origin[1] / -k[ground, 1]
    x = origin[0] + t * k[ground, 0]
    z = origin[2] + t * k[ground, 2]
    lab = np.full(x.shape, -1)
    for i, p in enumerate(spec.puddles):
        lab[p.contains(x, z)] = i
    out[ground] = lab
    return out


def _shade(spec: SceneSpec, origin, axes, pix_u, pix_v):
    """Radiance behind horizontal and vertical polarizers for the given pixels."""
    cam = spec.camera
    k = _pixel_rays(cam, axes, pix_u, pix_v)
    n = k.shape[0]
    horiz, vert = axes[0], axes[1]
    out_h = np.zeros((n, 3))
    out_v = np.zeros((n, 3))
    ground = k[:, 1] < -1e-9
    water = np.zeros(n, dtype=bool)
    info = {"e_perp": np.full((n, 3), np.nan), "e_par": np.full((n, 3), np.nan),
            "sky_total": np.full((n, 3), np.nan)}

    sky = ~ground
    if sky.any():
        ks = k[sky]
        rad, eta, evec = sky_model(spec, ks)
        for out, axis in ((out_h, horiz), (out_v, vert)):
            g = _polarizer_gain(ks, axis, evec)
            out[sky] = POLARIZER_TRANSMITTANCE * rad * (0.5 * (1 - eta) + eta * g)[:, None]

    if ground.any():
        kg = k[ground]
        rng_ = origin[1] / -kg[:, 1]
        pts = origin[None] + rng_[:, None] * kg
        # lateral footprint: aliasing along depth is shared by both views of a row
        footprint = rng_ / cam.f
        albedo = ground_albedo(spec.ground, pts[:, 0], pts[:, 2], footprint)
        diffuse = POLARIZER_TRANSMITTANCE * 0.5 * spec.ground_light * albedo
        gh = diffuse.copy()
        gv = diffuse.copy()
        which = np.full(kg.shape[0], -1)
        for i, p in enumerate(spec.puddles):
            which[p.contains(pts[:, 0], pts[:, 2])] = i
        wet = which >= 0
        if wet.any():
            kw = kg[wet]
            theta = np.arccos(np.clip(-kw[:, 1], -1.0, 1.0))
            kr = kw * np.array([1.0, -1.0, 1.0])
            rad, eta, evec = sky_model(spec, kr)
            s = _unit(np.cross(kw, UP))
            if spec.sky_polarization is None:
                direction = np.arccos(np.clip(np.abs(np.einsum("ij,ij->i", evec, s)), 0.0, 1.0))
            else:
                eta = np.full_like(theta, spec.sky_polarization[0])
                direction = np.full_like(theta, spec.sky_polarization[1])
            sky_in = sky_radiance_for_view(rad, eta[:, None], direction[:, None])
            e_perp = np.zeros_like(rad)
            e_par = np.zeros_like(rad)
            idx = which[wet]
            for i, p in enumerate(spec.puddles):
                sel = idx == i
                if not sel.any():
                    continue
                sub = type(sky_in)(sky_in.e_perp[sel], sky_in.e_par[sel])
                ex = exit_radiance(sub, AIR_WATER, p.column, theta[sel, None])
                e_perp[sel] = ex.e_perp
                e_par[sel] = ex.e_par
            # E of the s-component is horizontal and transverse
            for arr, axis in ((gh, horiz), (gv, vert)):
                c = _polarizer_gain(kw, axis, s)[:, None]
                arr[wet] = POLARIZER_TRANSMITTANCE * (e_perp * c + e_par * (1 - c))
            gidx = np.flatnonzero(ground)[wet]
            info["e_perp"][gidx] = e_perp
            info["e_par"][gidx] = e_par
            info["sky_total"][gidx] = sky_in.e_perp + sky_in.e_par
            water[gidx] = True
        out_h[ground] = gh
        out_v[ground] = gv
    return out_h, out_v, water, info


def true_ground_plane(cam: CameraSpec) -> GroundPlane:
    """Disparity plane of the ground seen from the left camera."""
    right, down, fwd = cam.axes()
    uc, vc = cam.center
    s = cam.baseline / cam.mount_height
    a, b = -s * right[1], -s * down[1]
    c = -s * (fwd[1] * cam.f - right[1] * uc - down[1] * vc)
    return GroundPlane(a, b, c)


def _to_uint8(radiance, spec: SceneSpec, rng):
    img = spec.exposure * radiance
    if spec.blur_sigma > 0:
        img = gaussian_filter(img, (spec.blur_sigma, spec.blur_sigma, 0), mode="nearest")
    if spec.noise_sigma > 0:
        img = img + rng.normal(0.0, spec.noise_sigma, img.shape)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def _antialias(spec: SceneSpec, origin, axes, u, v, radiance, which):
    """Replace pixels straddling a puddle or horizon edge by the mean of an
    S x S grid of sub-pixel samples. Truth labels stay at pixel centres."""
    cam = spec.camera
    centre = _surface_label(spec, origin, _pixel_rays(cam, axes, u, v))
    edge = np.zeros(u.shape, bool)
    for du, dv in ((-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)):
        edge |= _surface_label(spec, origin, _pixel_rays(cam, axes, u + du, v + dv)) != centre
    if not edge.any():
        return
    n = spec.supersample
    offs = (np.arange(n) + 0.5) / n - 0.5
    acc = np.zeros((int(edge.sum()), 3))
    for dv in offs:
        for du in offs:
            out = _shade(spec, origin, axes, u[edge] + du, v[edge] + dv)[which]
            acc += out
    radiance[edge] = acc / (n * n)


def render(spec: SceneSpec) -> SyntheticFrame:
    cam = spec.camera
    h, w = cam.height, cam.width
    vv, uu = np.mgrid[0:h, 0:w]
    u, v = uu.ravel().astype(float), vv.ravel().astype(float)
    axes = cam.axes()
    origin = cam.position()

    lh, _, water, info = _shade(spec, origin, axes, u, v)
    _, rv, _, _ = _shade(spec, origin + cam.baseline * axes[0], axes, u, v)
    if spec.supersample > 1:
        _antialias(spec, origin, axes, u, v, lh, 0)
        _antialias(spec, origin + cam.baseline * axes[0], axes, u, v, rv, 1)

    rng = np.random.default_rng(spec.seed)
    left = _to_uint8(lh.reshape(h, w, 3), spec, rng)
    right = _to_uint8(rv.reshape(h, w, 3), spec, rng)

    plane = true_ground_plane(cam)
    disp = plane.disparity_map(w, h)
    disp = np.where(disp > 0, disp, np.nan)
    frame = PolarizedStereoFrame(left, right, focal_length=cam.f, baseline=cam.baseline,
                                 camera_height=cam.mount_height, principal_point=cam.center)
    mask = np.where(water.reshape(h, w), MASK_WATER, MASK_DRY).astype(np.uint8)
    extras = {key: val.reshape(h, w, 3) for key, val in info.items()}
    return SyntheticFrame(frame, mask, disp, plane, horizon_line(plane, w, h), extras)


def render_sequence(spec: SceneSpec, n: int, advance: float = 1.0) -> list[SyntheticFrame]:
    """Drive forward ``advance`` metres per frame; puddles stay put, noise reseeds per frame."""
    if n < 1:
        raise ValueError("need at least one frame")
    frames = []
    for i in range(n):
        cam = replace(spec.camera, z=spec.camera.z + i * advance)
        frames.append(render(replace(spec, camera=cam, seed=spec.seed + i)))
    return frames


def random_puddles(rng, n, z_range=(3.0, 35.0), x_range=(-4.0, 4.0), size_range=(0.5, 2.5)):
    out = []
    for _ in range(n):
        sx = rng.uniform(*size_range)
        out.append(Puddle(x=float(rng.uniform(*x_range)), z=float(rng.uniform(*z_range)),
                          semi_x=float(sx), semi_z=float(sx * rng.uniform(0.6, 1.8)),
                          angle_deg=float(rng.uniform(0, 180)),
                          mu_absorption=tuple(float(a) for a in rng.uniform(0.45, 0.8, 3)),
                          bottom_share=float(rng.uniform(0.3, 0.7))))
    return tuple(out)


def random_scene(rng, base: SceneSpec, n_puddles, **puddle_kw) -> SceneSpec:
    """Jitter camera attitude, sun and texture around ``base``."""
    cam = replace(base.camera, pitch_deg=base.camera.pitch_deg + rng.uniform(-1.0, 1.0),
                  roll_deg=base.camera.roll_deg + rng.uniform(-3.0, 3.0),
                  z=float(rng.uniform(0, 500)))
    puddles = random_puddles(rng, n_puddles, **puddle_kw)
    puddles = tuple(replace(p, z=p.z + cam.z) for p in puddles)
    return replace(base, camera=cam, puddles=puddles,
                   theta_sun_deg=float(np.clip(base.theta_sun_deg + rng.uniform(-15, 15), 0, 90)),
                   sun_azimuth_deg=float(base.sun_azimuth_deg + rng.uniform(-40, 40)),
                   ground=replace(base.ground, texture_seed=int(rng.integers(1 << 30))),
                   seed=int(rng.integers(1 << 30)))
