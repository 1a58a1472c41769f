"""Sky polarization, Fresnel reflection/refraction and water-column mixing.

All functions broadcast over numpy arrays. Radiometric quantities carry a
trailing colour axis of length 3 where it matters, but nothing here forces
it; scalars work too.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_AIR = 1.0
N_WATER = 1.33
ETA_MAX = 0.9


@dataclass(frozen=True)
class SkyGeometry:
    theta_sun: float
    theta_view: float
    psi: float

    def __post_init__(self):
        half = np.pi / 2
        if not (0.0 <= self.theta_sun <= half and 0.0 <= self.theta_view <= half):
            raise ValueError("zenith angles must lie in [0, pi/2]")
        if not (0.0 <= self.psi < 2 * np.pi):
            raise ValueError("psi must lie in [0, 2*pi)")


@dataclass(frozen=True)
class FresnelMedia:
    n1: float = N_AIR
    n2: float = N_WATER

    def __post_init__(self):
        if self.n1 <= 0 or self.n2 <= 0:
            raise ValueError("refractive indices must be positive")

    def reversed(self) -> "FresnelMedia":
        return FresnelMedia(self.n2, self.n1)


AIR_WATER = FresnelMedia(N_AIR, N_WATER)


@dataclass(frozen=True)
class SkyRadiance:
    e_perp: np.ndarray
    e_par: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.e_perp) < 0) or np.any(np.asarray(self.e_par) < 0):
            raise ValueError("sky radiance components must be non-negative")

    @property
    def total(self):
        return np.asarray(self.e_perp) + np.asarray(self.e_par)


@dataclass(frozen=True)
class WaterColumn:
    """Per-channel fate of light entering the water: particle scattering,
    bottom scattering, absorption. The three fractions sum to one."""

    mu_particles: np.ndarray = field(default_factory=lambda: np.full(3, 0.2))
    mu_bottom: np.ndarray = field(default_factory=lambda: np.full(3, 0.2))
    mu_absorption: np.ndarray = field(default_factory=lambda: np.full(3, 0.6))

    def __post_init__(self):
        parts = [np.asarray(x, dtype=float) for x in
                 (self.mu_particles, self.mu_bottom, self.mu_absorption)]
        for p in parts:
            if np.any(p < 0) or np.any(p > 1):
                raise ValueError("water column fractions must lie in [0, 1]")
        if np.any(np.abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-12):
            raise ValueError("water column fractions must sum to 1")

    @classmethod
    def from_absorption(cls, mu_absorption, bottom_share=0.5) -> "WaterColumn":
        """Split the non-absorbed fraction between bottom and particles."""
        mu_abs = np.asarray(mu_absorption, dtype=float)
        scatter = 1.0 - mu_abs
        mu_b = scatter * bottom_share
        return cls(mu_particles=scatter - mu_b, mu_bottom=mu_b, mu_absorption=mu_abs)

    @property
    def scattering(self):
        return np.asarray(self.mu_particles) + np.asarray(self.mu_bottom)


@dataclass(frozen=True)
class ExitRadiance:
    e_perp: np.ndarray
    e_par: np.ndarray


def scattering_angle(theta_sun, theta_view, psi):
    """Angle at the sky point between sun direction and view direction."""
    cos_g = (np.sin(theta_sun) * np.sin(theta_view) * np.cos(psi)
             + np.cos(theta_sun) * np.cos(theta_view))
    return np.arccos(np.clip(cos_g, -1.0, 1.0))


def scattering_angle_for(geom: SkyGeometry) -> float:
    return float(scattering_angle(geom.theta_sun, geom.theta_view, geom.psi))


def polarization_degree(gamma, eta_max=ETA_MAX):
    """Rayleigh degree of polarization for scattering angle ``gamma``."""
    s = np.sin(gamma)
    c = np.cos(gamma)
    return eta_max * s * s / (1.0 + c * c)


def fresnel_reflect(media: FresnelMedia, theta):
    """Energy reflectances (r_perp, r_par) at incidence angle ``theta``.

    Past the critical angle (n1 > n2) both components are 1.
    """
    n1, n2 = media.n1, media.n2
    theta = np.asarray(theta, dtype=float)
    cos_i = np.cos(theta)
    arg = 1.0 - (n1 / n2) ** 2 * np.sin(theta) ** 2
    tir = arg < 0.0
    root = np.sqrt(np.where(tir, 0.0, arg))

    a = n1 * cos_i
    b = n2 * root
    den_s = a + b
    c = n1 * root
    d = n2 * cos_i
    den_p = c + d
    with np.errstate(divide="ignore", invalid="ignore"):
        r_perp = np.where(den_s > 0, ((a - b) / den_s) ** 2, 1.0)
        r_par = np.where(den_p > 0, ((c - d) / den_p) ** 2, 1.0)
    r_perp = np.where(tir, 1.0, np.clip(r_perp, 0.0, 1.0))
    r_par = np.where(tir, 1.0, np.clip(r_par, 0.0, 1.0))
    if r_perp.ndim == 0:
        return float(r_perp), float(r_par)
    return r_perp, r_par


def fresnel_refract(media: FresnelMedia, theta):
    """Transmitted energy fractions, the complement of the reflectances."""
    r_perp, r_par = fresnel_reflect(media, theta)
    return 1.0 - r_perp, 1.0 - r_par


def snell_refraction_angle(media: FresnelMedia, theta):
    """Refraction angle, or None (NaN for arrays) under total internal reflection."""
    s = media.n1 / media.n2 * np.sin(np.asarray(theta, dtype=float))
    out = np.where(s <= 1.0, np.arcsin(np.clip(s, -1.0, 1.0)), np.nan)
    if out.ndim == 0:
        return None if np.isnan(out) else float(out)
    return out


def entering_energy(sky: SkyRadiance, media: FresnelMedia, theta):
    t_perp, t_par = fresnel_refract(media, theta)
    return np.asarray(sky.e_perp) * t_perp + np.asarray(sky.e_par) * t_par


def exit_radiance(sky: SkyRadiance, media: FresnelMedia, column: WaterColumn, theta) -> ExitRadiance:
    """Reflected plus re-emerging scattered light leaving the surface at ``theta``.

    Scattered light inside the water is unpolarized and leaves through the
    internal angle whose refraction exits at ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    r_perp, r_par = fresnel_reflect(media, theta)
    f_in = np.asarray(sky.e_perp) * (1.0 - r_perp) + np.asarray(sky.e_par) * (1.0 - r_par)

    theta_in = np.asarray(snell_refraction_angle(media, theta), dtype=float)
    t_perp, t_par = fresnel_refract(media.reversed(), np.nan_to_num(theta_in, nan=np.pi / 2))
    # a ray can always exit at theta when it entered at theta
    scattered = 0.5 * f_in * column.scattering
    e_perp = np.asarray(sky.e_perp) * r_perp + scattered * t_perp
    e_par = np.asarray(sky.e_par) * r_par + scattered * t_par
    return ExitRadiance(np.maximum(e_perp, 0.0), np.maximum(e_par, 0.0))


def sky_radiance_for_view(total_intensity, eta, polarization_direction_angle) -> SkyRadiance:
    """Split sky light of polarization degree ``eta`` into perp/par energies.

    ``polarization_direction_angle`` is the angle between the E-vector of the
    polarized part and the axis perpendicular to the reflection plane.
    """
    total = np.asarray(total_intensity, dtype=float)
    if np.any(total < 0):
        raise ValueError("total intensity must be non-negative")
    eta = np.asarray(eta, dtype=float)
    c2 = np.cos(polarization_direction_angle) ** 2
    unpol = 0.5 * (1.0 - eta) * total
    e_perp = unpol + eta * c2 * total
    e_par = unpol + eta * (1.0 - c2) * total
    return SkyRadiance(np.maximum(e_perp, 0.0), np.maximum(e_par, 0.0))


def sky_polarization_table(theta_sun_deg, theta_view_deg, psi_deg, eta_max=ETA_MAX):
    ts, tv, ps = np.meshgrid(np.radians(theta_sun_deg), np.radians(theta_view_deg),
                             np.radians(psi_deg), indexing="ij")
    gamma = scattering_angle(ts, tv, ps)
    return ts, tv, ps, gamma, polarization_degree(gamma, eta_max)


FIG4_CONFIGS = {
    "unpolarized": (0.0, 0.0),
    "perp80": (0.8, 0.0),
    "par80": (0.8, np.pi / 2),
}


def reflection_curves(theta, degree, direction, column: WaterColumn | None = None,
                      media: FresnelMedia = AIR_WATER, total=1.0):
    column = column or WaterColumn.from_absorption(0.6)
    sky = sky_radiance_for_view(total, degree, direction)
    out = exit_radiance(sky, media, column, np.asarray(theta, dtype=float)[..., None])
    # single-channel curves: collapse the colour axis of the column
    return out.e_perp.mean(axis=-1), out.e_par.mean(axis=-1)


def emit_model_curves(out_dir, step_deg=5.0, eta_max=ETA_MAX, mu_absorption=0.6,
                      bottom_share=0.5, theta_step_deg=1.0):
    """Write the sky-polarization and water-reflection curve tables as CSV.

    Returns the two written paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sun = np.arange(0.0, 90.0 + 1e-9, step_deg)
    view = np.arange(0.0, 90.0 + 1e-9, step_deg)
    psi = np.arange(0.0, 360.0, step_deg)
    ts, tv, ps, gamma, eta = sky_polarization_table(sun, view, psi, eta_max)
    sky_path = out_dir / "sky_polarization.csv"
    with open(sky_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_sun_deg", "theta_view_deg", "psi_deg", "gamma_rad", "eta"])
        for row in zip(np.degrees(ts).ravel(), np.degrees(tv).ravel(), np.degrees(ps).ravel(),
                       gamma.ravel(), eta.ravel()):
            w.writerow([f"{row[0]:.6g}", f"{row[1]:.6g}", f"{row[2]:.6g}",
                        f"{row[3]:.10g}", f"{row[4]:.10g}"])

    column = WaterColumn.from_absorption(np.full(3, mu_absorption), bottom_share)
    theta_deg = np.arange(0.0, 90.0 + 1e-9, theta_step_deg)
    theta = np.radians(theta_deg)
    r_perp, r_par = fresnel_reflect(AIR_WATER, theta)
    refl_path = out_dir / "water_reflection.csv"
    with open(refl_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "theta_deg", "r_perp", "r_par", "e_perp_exit", "e_par_exit",
                    "difference"])
        for name, (deg, direction) in FIG4_CONFIGS.items():
            e_perp, e_par = reflection_curves(theta, deg, direction, column)
            for i, t in enumerate(theta_deg):
                w.writerow([name, f"{t:.6g}", f"{r_perp[i]:.10g}", f"{r_par[i]:.10g}",
                            f"{e_perp[i]:.10g}", f"{e_par[i]:.10g}",
                            f"{e_perp[i] - e_par[i]:.10g}"])
    return sky_path, refl_path
