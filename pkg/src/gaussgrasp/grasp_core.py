"""Grasp representations, target-map encoding and map-to-grasp decoding.

Conventions used throughout the package:

* image coordinates are ``x`` to the right (column) and ``y`` down (row);
* an angle ``theta`` is measured from the +x axis towards +y and is the
  direction of the gripper opening axis;
* grasp angles are pi-periodic and stored in ``[-pi/2, pi/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import ndimage

HALF_PI = math.pi / 2


def canonical_angle(theta: float) -> float:
    """Wrap ``theta`` into ``[-pi/2, pi/2)`` under pi-periodicity."""
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    wrapped = math.fmod(theta + HALF_PI, math.pi)
    if wrapped < 0:
        wrapped += math.pi
    out = wrapped - HALF_PI
    # fmod/addition rounding can land exactly on the open upper bound
    if out >= HALF_PI:
        out -= math.pi
    return out


def angle_difference(a: float, b: float) -> float:
    """Smallest pi-periodic distance between two grasp angles, in ``[0, pi/2]``."""
    d = math.fmod(abs(a - b), math.pi)
    return min(d, math.pi - d)


@dataclass(frozen=True)
class GraspRectangle:
    """Oriented grasp rectangle ``(x, y, theta, w, h)``.

    ``w`` is the gripper opening measured along ``theta``; ``h`` is the jaw
    size perpendicular to it.
    """

    x: float
    y: float
    theta: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"rectangle sides must be positive, got w={self.w}, h={self.h}")
        object.__setattr__(self, "theta", canonical_angle(float(self.theta)))

    @property
    def center(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def area(self) -> float:
        return self.w * self.h

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        along = np.array([math.cos(self.theta), math.sin(self.theta)])
        across = np.array([-along[1], along[0]])
        return along, across

    def corners(self) -> np.ndarray:
        """4x2 array of ``(x, y)`` corners in counter-clockwise order (y-up sense)."""
        along, across = self.axes()
        c = np.array([self.x, self.y])
        a = along * self.w / 2
        b = across * self.h / 2
        return np.stack([c - a - b, c + a - b, c + a + b, c - a + b])

    def scaled(self, factor: float) -> "GraspRectangle":
        return GraspRectangle(self.x, self.y, self.theta, self.w * factor, self.h * factor)


@dataclass(frozen=True)
class PlanarGrasp:
    """Image-space grasp: center pixel ``(u, v)``, angle, opening width, quality."""

    u: float
    v: float
    phi: float
    width: float
    quality: float

    def __post_init__(self):
        if self.width < 0:
            raise ValueError(f"width must be non-negative, got {self.width}")
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError(f"quality must lie in [0, 1], got {self.quality}")
        object.__setattr__(self, "phi", canonical_angle(float(self.phi)))

    def as_dict(self) -> dict:
        return {"u": self.u, "v": self.v, "phi": self.phi, "width": self.width, "quality": self.quality}


@dataclass(frozen=True)
class WorldGrasp:
    p: np.ndarray
    varphi: float
    w: float
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")


@dataclass
class GraspMaps:
    """The four pixel-wise maps. Arrays are ``(H, W)`` or batched ``(B, H, W)``."""

    quality: np.ndarray
    cos2theta: np.ndarray
    sin2theta: np.ndarray
    width: np.ndarray

    def __post_init__(self):
        shapes = {m.shape for m in self.as_tuple()}
        if len(shapes) != 1:
            raise ValueError(f"grasp maps must share one shape, got {sorted(shapes)}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.quality.shape

    def as_tuple(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.quality, self.cos2theta, self.sin2theta, self.width)

    def stack(self) -> np.ndarray:
        """Stack to ``(4, H, W)`` (or ``(B, 4, H, W)`` for batched maps)."""
        axis = 0 if self.quality.ndim == 2 else 1
        return np.stack(self.as_tuple(), axis=axis)

    @classmethod
    def from_stack(cls, arr: np.ndarray) -> "GraspMaps":
        if arr.ndim == 3:
            return cls(arr[0], arr[1], arr[2], arr[3])
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    def __getitem__(self, i) -> "GraspMaps":
        return GraspMaps(self.quality[i], self.cos2theta[i], self.sin2theta[i], self.width[i])

    def angle(self) -> np.ndarray:
        return 0.5 * np.arctan2(self.sin2theta, self.cos2theta)


class FillRegion(str, Enum):
    CENTER_THIRD = "center-third"
    FULL_RECT = "full-rect"


class EncoderMode(str, Enum):
    GAUSSIAN = "gaussian"
    BINARY = "binary"


@dataclass
class GaussianEncoderConfig:
    T_x: float = 16.0
    T_y: float = 16.0
    w_max: float = 150.0
    fill_region: FillRegion = FillRegion.CENTER_THIRD
    mode: EncoderMode = EncoderMode.GAUSSIAN

    def __post_init__(self):
        self.fill_region = FillRegion(self.fill_region)
        self.mode = EncoderMode(self.mode)
        if not (self.T_x > 0 and self.T_y > 0 and self.w_max > 0):
            raise ValueError("T_x, T_y and w_max must be positive")

    @classmethod
    def isotropic(cls, t: float, **kw) -> "GaussianEncoderConfig":
        return cls(T_x=t, T_y=t, **kw)


# ----------------------------------------------------------------------------
# angle encoding


def encode_angle(theta: float) -> tuple[float, float]:
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    # reduce first so theta and theta + pi give bit-identical outputs
    t = canonical_angle(theta)
    return (math.cos(2 * t), math.sin(2 * t))


def decode_angle(cos2t: float, sin2t: float) -> float:
    """Recover ``theta`` in ``[-pi/2, pi/2)`` from ``(cos 2theta, sin 2theta)``.

    Uses the two-argument arctangent so that every half-turn angle is
    reachable; ``atan(sin/cos)/2`` would fold the range onto ``[-pi/4, pi/4]``.
    """
    if cos2t == 0 and sin2t == 0:
        raise ValueError("angle vector (0, 0) has no direction")
    return canonical_angle(0.5 * math.atan2(sin2t, cos2t))


# ----------------------------------------------------------------------------
# target encoding


def _rounded_center(x0: float, y0: float, shape: tuple[int, int]) -> tuple[int, int]:
    h, w = shape
    if not (0 <= x0 < w and 0 <= y0 < h):
        raise ValueError(f"center ({x0}, {y0}) lies outside a {w}x{h} image")
    return min(int(math.floor(x0 + 0.5)), w - 1), min(int(math.floor(y0 + 0.5)), h - 1)


def gaussian_quality_patch(center: tuple[float, float], cfg: GaussianEncoderConfig,
                           shape: tuple[int, int]) -> np.ndarray:
    """Full-image 2-D Gaussian with peak 1.0 at the rounded ``center``."""
    cx, cy = _rounded_center(center[0], center[1], shape)
    h, w = shape
    gx = np.exp(-((np.arange(w) - cx) ** 2) / (2.0 * cfg.T_x ** 2))
    gy = np.exp(-((np.arange(h) - cy) ** 2) / (2.0 * cfg.T_y ** 2))
    return np.outer(gy, gx)


def region_mask(rect: GraspRectangle, region: FillRegion, shape: tuple[int, int]) -> np.ndarray:
    """Boolean mask of pixel centres inside ``rect`` (or its central third).

    The rounded centre pixel is always included so that tiny rectangles
    still carry an angle/width label where the quality peak sits.
    """
    h, w = shape
    frac = 1.0 / 3.0 if FillRegion(region) is FillRegion.CENTER_THIRD else 1.0
    half_w = rect.w * frac / 2
    half_h = rect.h * frac / 2
    along, across = rect.axes()
    reach = math.hypot(half_w, half_h)
    x_lo, x_hi = max(0, int(math.floor(rect.x - reach))), min(w - 1, int(math.ceil(rect.x + reach)))
    y_lo, y_hi = max(0, int(math.floor(rect.y - reach))), min(h - 1, int(math.ceil(rect.y + reach)))
    mask = np.zeros(shape, dtype=bool)
    if x_lo <= x_hi and y_lo <= y_hi:
        yy, xx = np.mgrid[y_lo:y_hi + 1, x_lo:x_hi + 1]
        dx, dy = xx - rect.x, yy - rect.y
        inside = (np.abs(dx * along[0] + dy * along[1]) <= half_w + 1e-9) & \
                 (np.abs(dx * across[0] + dy * across[1]) <= half_h + 1e-9)
        mask[y_lo:y_hi + 1, x_lo:x_hi + 1] = inside
    cx, cy = _rounded_center(rect.x, rect.y, shape)
    mask[cy, cx] = True
    return mask


def encode_grasp_maps(grasps: Sequence[GraspRectangle], cfg: GaussianEncoderConfig,
                      shape: tuple[int, int]) -> GraspMaps:
    """Encode ground-truth rectangles into training target maps.

    Quality patches combine by element-wise max; angle and width are written
    inside each grasp's fill region with later grasps overwriting earlier ones.
    """
    quality = np.zeros(shape)
    cos2 = np.zeros(shape)
    sin2 = np.zeros(shape)
    width = np.zeros(shape)
    for g in grasps:
        mask = region_mask(g, cfg.fill_region, shape)
        if cfg.mode is EncoderMode.GAUSSIAN:
            np.maximum(quality, gaussian_quality_patch(g.center, cfg, shape), out=quality)
        else:
            quality[mask] = 1.0
        c, s = encode_angle(g.theta)
        cos2[mask] = c
        sin2[mask] = s
        width[mask] = min(max(g.w / cfg.w_max, 0.0), 1.0)
    return GraspMaps(quality, cos2, sin2, width)


# ----------------------------------------------------------------------------
# decoding


def _peak_indices(q: np.ndarray, k: int, min_distance: int) -> list[tuple[int, int]]:
    footprint = 2 * min_distance + 1
    is_peak = q >= ndimage.maximum_filter(q, size=footprint, mode="nearest")
    flat = np.flatnonzero(is_peak)
    # stable sort keeps the lowest row-major index first among equal values
    order = flat[np.argsort(-q.ravel()[flat], kind="stable")]
    picked: list[tuple[int, int]] = []
    for idx in order:
        r, c = divmod(int(idx), q.shape[1])
        if all(max(abs(r - pr), abs(c - pc)) > min_distance for pr, pc in picked):
            picked.append((r, c))
            if len(picked) == k:
                break
    return picked


def decode_grasps(maps: GraspMaps, k: int = 1, smooth_sigma: float = 2.0,
                  w_max: float = 150.0, min_distance: int = 1) -> list[PlanarGrasp]:
    """Extract the top-``k`` grasps from a single set of ``(H, W)`` maps.

    Quality is clipped to [0, 1] and optionally Gaussian-smoothed before peak
    search. Ties go to the lowest row-major index, so a flat map yields the
    top-left pixel.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if maps.quality.ndim != 2:
        raise ValueError("decode_grasps expects unbatched (H, W) maps")
    q = np.clip(np.asarray(maps.quality, dtype=np.float64), 0.0, 1.0)
    if smooth_sigma > 0:
        q = np.clip(ndimage.gaussian_filter(q, smooth_sigma), 0.0, 1.0)
    if k == 1:
        peaks = [divmod(int(np.argmax(q)), q.shape[1])]
    else:
        peaks = _peak_indices(q, k, min_distance)
    out = []
    for r, c in peaks:
        cs, sn = float(maps.cos2theta[r, c]), float(maps.sin2theta[r, c])
        phi = decode_angle(cs, sn) if (cs, sn) != (0.0, 0.0) else 0.0
        width = max(float(maps.width[r, c]), 0.0) * w_max
        out.append(PlanarGrasp(u=float(c), v=float(r), phi=phi, width=width, quality=float(q[r, c])))
    return out


def rectangle_from_planar(g: PlanarGrasp, jaw_ratio: float = 0.5) -> GraspRectangle:
    if not g.width > 0:
        raise ValueError(f"cannot build a rectangle from non-positive width {g.width}")
    return GraspRectangle(g.u, g.v, g.phi, g.width, jaw_ratio * g.width)


# ----------------------------------------------------------------------------
# frames


@dataclass
class Calibration:
    """Pinhole intrinsics plus the camera-to-world homogeneous transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    T_RC: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        self.T_RC = np.asarray(self.T_RC, dtype=np.float64)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        for name, m in (("T_RC", self.T_RC), ("T_CI", self.T_CI)):
            if m.shape != (4, 4) or not np.allclose(m[3], [0, 0, 0, 1]):
                raise ValueError(f"{name} must be 4x4 homogeneous with bottom row (0, 0, 0, 1)")
            if abs(np.linalg.det(m)) < 1e-12:
                raise ValueError(f"{name} is singular")

    @property
    def T_CI(self) -> np.ndarray:
        """Maps ``(u*d, v*d, d, 1)`` to the camera-frame point."""
        return np.array([
            [1 / self.fx, 0, -self.cx / self.fx, 0],
            [0, 1 / self.fy, -self.cy / self.fy, 0],
            [0, 0, 1, 0],
            [0, 0, 0, 1],
        ])


def pixel_to_world(g: PlanarGrasp, depth_at_center: float, calib: Calibration) -> WorldGrasp:
    """Lift an image grasp to the world frame at the given depth (metres).

    The width is converted with the ``depth / fx`` pixel footprint.
    """
    if not depth_at_center > 0:
        raise ValueError(f"depth must be positive, got {depth_at_center}")
    d = depth_at_center
    p_cam = calib.T_CI @ np.array([g.u * d, g.v * d, d, 1.0])
    p_world = calib.T_RC @ p_cam
    yaw = math.atan2(calib.T_RC[1, 0], calib.T_RC[0, 0])
    return WorldGrasp(p=p_world[:3] / p_world[3], varphi=g.phi + yaw, w=g.width * d / calib.fx, q=g.quality)
