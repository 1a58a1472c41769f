"""Disparity estimation, ground-plane fitting, horizon extraction and warping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import kernels

INVALID_DISPARITY = -1.0

PATHS_4 = ((0, 1), (0, -1), (1, 0), (-1, 0))
PATHS_8 = PATHS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


class PlaneFitError(RuntimeError):
    """No usable ground plane could be estimated for a frame."""


@dataclass(frozen=True, eq=False)
class PolarizedStereoFrame:
    """Rectified pair: left behind a horizontal polarizer, right behind a vertical one."""

    left: np.ndarray
    right: np.ndarray
    focal_length: float = 720.0
    baseline: float = 0.12
    camera_height: float = 1.77
    frame_id: int = 0
    principal_point: tuple[float, float] | None = None

    def __post_init__(self):
        if self.left.shape != self.right.shape:
            raise ValueError(f"left {self.left.shape} and right {self.right.shape} differ")
        if self.left.ndim != 3 or self.left.shape[2] != 3:
            raise ValueError("images must be H x W x 3")
        if self.focal_length <= 0 or self.baseline <= 0:
            raise ValueError("focal length and baseline must be positive")

    @property
    def height(self) -> int:
        return self.left.shape[0]

    @property
    def width(self) -> int:
        return self.left.shape[1]

    @property
    def center(self) -> tuple[float, float]:
        if self.principal_point is not None:
            return self.principal_point
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    @classmethod
    def from_side_by_side(cls, image: np.ndarray, **meta) -> "PolarizedStereoFrame":
        w = image.shape[1]
        if w % 2:
            raise ValueError("side-by-side image width must be even")
        half = w // 2
        return cls(left=np.ascontiguousarray(image[:, :half]),
                   right=np.ascontiguousarray(image[:, half:]), **meta)

    def side_by_side(self) -> np.ndarray:
        return np.concatenate([self.left, self.right], axis=1)


@dataclass(frozen=True)
class StereoParams:
    max_disparity: int = 48
    census_radius: int = 2
    block_radius: int = 1
    p1: int = 10
    p2: int = 120
    paths: int = 4
    lr_threshold: float = 1.0
    subpixel: bool = True

    def __post_init__(self):
        if not 1 <= self.census_radius <= 3:
            raise ValueError("census radius must be 1..3 (64-bit codes)")
        if self.block_radius < 0 or self.max_disparity < 1:
            raise ValueError("invalid block radius or disparity range")
        if not 0 < self.p1 < self.p2:
            raise ValueError("need 0 < P1 < P2")
        if self.paths not in (4, 8):
            raise ValueError("paths must be 4 or 8")


@dataclass(frozen=True, eq=False)
class DisparityMap:
    values: np.ndarray
    valid: np.ndarray
    max_disparity: int
    right_values: np.ndarray | None = field(default=None, repr=False)

    def write_png(self, path) -> None:
        """16-bit fixed point, 1/16 px; 65535 marks invalid pixels."""
        fixed = np.where(self.valid, np.round(self.values * 16.0), 65535)
        fixed = np.clip(fixed, 0, 65535).astype(np.uint16)
        Image.fromarray(fixed).save(path)

    @staticmethod
    def read_png(path, max_disparity=0) -> "DisparityMap":
        fixed = np.asarray(Image.open(path)).astype(np.int64)
        valid = fixed != 65535
        values = np.where(valid, fixed / 16.0, INVALID_DISPARITY)
        return DisparityMap(values, valid, max_disparity)


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim == 2:
        return img.astype(np.uint8)
    g = 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]
    return np.clip(np.round(g), 0, 255).astype(np.uint8)


def _box_sum(cost: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return cost
    c = np.pad(cost.astype(np.uint32), ((radius + 1, radius), (radius + 1, radius), (0, 0)),
               mode="edge")
    c[0] = 0
    c[:, 0] = 0
    s = c.cumsum(axis=0).cumsum(axis=1)
    k = 2 * radius + 1
    out = s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]
    return out.astype(np.uint16)


def _right_disparity(total: np.ndarray) -> np.ndarray:
    h, w, nd = total.shape
    big = np.iinfo(np.uint32).max
    right = np.full((h, w, nd), big, dtype=np.uint32)
    for d in range(nd):
        # right pixel x matches left pixel x + d
        right[:, :w - d, d] = total[:, d:, d]
    return right.argmin(axis=-1)


def compute_disparity(frame: PolarizedStereoFrame, params: StereoParams = StereoParams()) -> DisparityMap:
    """Census-cost semi-global matching with a left-right consistency check."""
    if params.max_disparity >= frame.width:
        raise ValueError(f"max disparity {params.max_disparity} >= image width {frame.width}")
    gl = to_gray(frame.left)
    gr = to_gray(frame.right)
    r = params.census_radius
    nbits = (2 * r + 1) ** 2 - 1
    cl = kernels.census_transform(np.ascontiguousarray(gl), r)
    cr = kernels.census_transform(np.ascontiguousarray(gr), r)
    cost = kernels.hamming_cost_volume(cl, cr, params.max_disparity, nbits)
    cost = np.ascontiguousarray(_box_sum(cost, params.block_radius))
    paths = PATHS_4 if params.paths == 4 else PATHS_8
    total = kernels.aggregate_paths(cost, params.p1, params.p2, paths)

    h, w, nd = total.shape
    d_int = total.argmin(axis=-1)
    values = d_int.astype(np.float64)
    if params.subpixel:
        inner = (d_int > 0) & (d_int < nd - 1)
        vv, uu = np.nonzero(inner)
        dd = d_int[inner]
        c0 = total[vv, uu, dd - 1].astype(np.float64)
        c1 = total[vv, uu, dd].astype(np.float64)
        c2 = total[vv, uu, dd + 1].astype(np.float64)
        den = c0 - 2.0 * c1 + c2
        off = np.where(den > 0, (c0 - c2) / (2.0 * np.where(den > 0, den, 1.0)), 0.0)
        values[vv, uu] = dd + np.clip(off, -0.5, 0.5)

    d_right = _right_disparity(total)
    uu = np.arange(w)[None, :]
    x = uu - d_int
    in_range = x >= 0
    xr = np.clip(x, 0, w - 1)
    matched = np.take_along_axis(d_right, xr, axis=1)
    valid = in_range & (np.abs(matched - d_int) <= params.lr_threshold)
    valid &= (values >= 0) & (values < params.max_disparity)
    values = np.where(valid, values, INVALID_DISPARITY)
    return DisparityMap(values, valid, params.max_disparity, right_values=d_right)


@dataclass(frozen=True)
class GroundPlane:
    """Ground disparity plane d = a*u + b*v + c."""

    a: float
    b: float
    c: float
    inlier_count: int = 0
    inlier_fraction: float = 0.0

    def disparity(self, u, v):
        return self.a * np.asarray(u, dtype=float) + self.b * np.asarray(v, dtype=float) + self.c

    def disparity_map(self, width, height):
        v, u = np.mgrid[0:height, 0:width]
        return self.disparity(u, v)

    @property
    def coefficients(self):
        return np.array([self.a, self.b, self.c])


def triangle_roi(width, height, horizon_row=None, apex_offset=0.15, base_margin=0.1):
    """Triangle in front of the car as three (u, v) vertices."""
    if horizon_row is None:
        horizon_row = (height - 1) / 2.0
    apex = (width / 2.0, horizon_row + apex_offset * height)
    return (apex, (base_margin * width, height - 1.0), ((1.0 - base_margin) * width, height - 1.0))


def triangle_mask(width, height, vertices) -> np.ndarray:
    v, u = np.mgrid[0:height, 0:width].astype(float)
    (x0, y0), (x1, y1), (x2, y2) = vertices

    def side(xa, ya, xb, yb):
        return (xb - xa) * (v - ya) - (yb - ya) * (u - xa)

    s0 = side(x0, y0, x1, y1)
    s1 = side(x1, y1, x2, y2)
    s2 = side(x2, y2, x0, y0)
    return ((s0 >= 0) & (s1 >= 0) & (s2 >= 0)) | ((s0 <= 0) & (s1 <= 0) & (s2 <= 0))


def _solve_plane(u, v, d, w=None):
    # centred, scaled columns keep the normal equations well conditioned
    uc, vc = u.mean(), v.mean()
    su = max(u.std(), 1.0)
    sv = max(v.std(), 1.0)
    A = np.column_stack([(u - uc) / su, (v - vc) / sv, np.ones_like(u)])
    y = d
    if w is not None:
        sw = np.sqrt(w)
        A = A * sw[:, None]
        y = d * sw
    sol, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < 3:
        raise PlaneFitError("degenerate point set (collinear)")
    a = sol[0] / su
    b = sol[1] / sv
    c = sol[2] - a * uc - b * vc
    return np.array([a, b, c])


def fit_plane_points(u, v, d, scale=1.0, max_iter=20, tol=1e-8, robust=True,
                     adaptive_scale=True, min_scale=1e-3):
    """Cauchy-loss IRLS plane fit on raw points. Returns coefficient array.

    With ``adaptive_scale`` the Cauchy scale is re-estimated every iteration
    as 1.4826 * MAD of the residuals, capped at ``scale`` and floored at
    ``min_scale``; otherwise ``scale`` is used as is.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    d = np.asarray(d, dtype=float)
    if u.size < 3:
        raise PlaneFitError(f"need at least 3 points, got {u.size}")
    coef = _solve_plane(u, v, d)
    if not robust:
        return coef
    for _ in range(max_iter):
        r = coef[0] * u + coef[1] * v + coef[2] - d
        s = scale
        if adaptive_scale:
            s = min(scale, max(1.4826 * np.median(np.abs(r)), min_scale))
        w = 1.0 / (1.0 + (r / s) ** 2)
        new = _solve_plane(u, v, d, w)
        change = np.linalg.norm(new - coef) / max(np.linalg.norm(new), 1e-300)
        coef = new
        if change < tol:
            break
    return coef


def fit_ground_plane(disp: DisparityMap, roi, scale=1.0, max_iter=20, tol=1e-8,
                     inlier_threshold=1.0, adaptive_scale=True) -> GroundPlane:
    """Robust ground-plane fit over valid disparities inside ``roi``.

    ``roi`` is either a boolean mask or three (u, v) triangle vertices.
    """
    h, w = disp.values.shape
    mask = np.asarray(roi) if np.asarray(roi).shape == (h, w) else triangle_mask(w, h, roi)
    sel = mask & disp.valid
    v, u = np.nonzero(sel)
    d = disp.values[sel]
    coef = fit_plane_points(u, v, d, scale=scale, max_iter=max_iter, tol=tol,
                            adaptive_scale=adaptive_scale)
    if coef[1] <= 0:
        raise PlaneFitError(f"fitted plane has non-positive vertical slope b={coef[1]:.4g}")
    r = np.abs(coef[0] * u + coef[1] * v + coef[2] - d)
    n_in = int(np.count_nonzero(r < inlier_threshold))
    return GroundPlane(float(coef[0]), float(coef[1]), float(coef[2]), n_in, n_in / len(d))


@dataclass(frozen=True)
class HorizonLine:
    """Zero-disparity line a*u + b*v + c = 0, positive on the ground side."""

    a: float
    b: float
    c: float
    omega: float
    endpoints: tuple

    def evaluate(self, u, v):
        return self.a * np.asarray(u, dtype=float) + self.b * np.asarray(v, dtype=float) + self.c

    def v_at(self, u):
        return -(self.a * np.asarray(u, dtype=float) + self.c) / self.b

    def normalized(self):
        n = np.hypot(self.a, self.b)
        return np.array([self.a, self.b, self.c]) / n


def horizon_line(plane: GroundPlane, width=None, height=None) -> HorizonLine:
    """Horizon of a ground plane, with its tilt from the border intersections."""
    a, b, c = plane.a, plane.b, plane.c
    if a == 0 and b == 0:
        raise PlaneFitError("plane has no image-space gradient; horizon undefined")
    if b == 0:
        u0 = -c / a
        return HorizonLine(a, b, c, np.pi / 2, ((u0, 0.0), (u0, float(height or 1) - 1)))
    u_left = 0.0
    u_right = float(width - 1) if width else 1.0
    v0 = -(a * u_left + c) / b
    v5 = -(a * u_right + c) / b
    omega = float(np.arctan((v5 - v0) / (u_right - u_left)))
    return HorizonLine(a, b, c, omega, ((u_left, v0), (u_right, v5)))


@dataclass(frozen=True, eq=False)
class WarpedPair:
    left: np.ndarray
    right_warped: np.ndarray
    coverage: np.ndarray


def warp_right_to_left(frame: PolarizedStereoFrame, plane: GroundPlane, mode="bilinear") -> WarpedPair:
    """Resample the right image into left coordinates using plane disparity."""
    h, w = frame.height, frame.width
    left = frame.left.astype(np.float64) / 255.0
    right = frame.right.astype(np.float64) / 255.0
    delta = plane.disparity_map(w, h)
    v, u = np.mgrid[0:h, 0:w]
    x = u - delta
    if mode == "nearest":
        x = np.floor(x + 0.5)
    elif mode != "bilinear":
        raise ValueError(f"unknown warp mode {mode!r}")
    coverage = (delta >= 0) & (x >= 0) & (x <= w - 1)
    xs = np.clip(x, 0, w - 1)
    x0 = np.floor(xs).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    frac = (xs - x0)[..., None]
    warped = right[v, x0] * (1.0 - frac) + right[v, x1] * frac
    if mode == "nearest":
        warped = right[v, x0]
    warped = np.where(coverage[..., None], warped, 0.0)
    return WarpedPair(left, warped, coverage)


def pixel_distance(plane: GroundPlane, focal_length, baseline, u, v):
    """Depth in metres of the ground point at pixel (u, v); None at/above the horizon."""
    delta = float(plane.disparity(u, v))
    if delta <= 0:
        return None
    return focal_length * baseline / delta


def distance_map(plane: GroundPlane, focal_length, baseline, width, height):
    delta = plane.disparity_map(width, height)
    with np.errstate(divide="ignore"):
        return np.where(delta > 0, focal_length * baseline / np.where(delta > 0, delta, 1.0), np.nan)
