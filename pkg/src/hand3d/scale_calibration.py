"""Metric-scale recovery from hand joints and relative-depth point rasters.

Depth pipelines emit 3D points only up to an unknown positive scale.  Hand
joints carry absolute depth, so the ratio between a joint's depth and the
raster depth at its pixel estimates that scale; the median over all usable
joints makes the estimate robust to fewer than half the pairs being corrupt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyOmega, NonPositiveDepth, NoValidPoints
from .geometry import DEPTH_EPSILON_M, CameraIntrinsics, Vec3
from .hand_kinematics import JOINT_COUNT, HandFrame


@dataclass(frozen=True, eq=False)
class PointRaster:
    """A dense grid of camera-frame 3D points, one per pixel.

    Each pixel is either valid (all three components finite, z > 0) or
    invalid (all three components NaN).  Values are stored as float64; the
    on-disk codec in dataset_io uses float32.
    """

    points: np.ndarray  # (height, width, 3)

    def __post_init__(self) -> None:
        p = np.array(self.points, dtype=float)
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"points must have shape (H, W, 3), got {p.shape}")
        finite = np.isfinite(p).all(axis=2)
        all_nan = np.isnan(p).all(axis=2)
        if not np.all(finite | all_nan):
            raise ValueError("each pixel must be fully finite or fully NaN")
        if np.any(p[finite, 2] <= 0.0):
            raise ValueError("valid raster points must have z > 0")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)

    @property
    def height(self) -> int:
        return int(self.points.shape[0])

    @property
    def width(self) -> int:
        return int(self.points.shape[1])

    @property
    def validity(self) -> np.ndarray:
        """(H, W) boolean mask of valid pixels."""
        return np.isfinite(self.points).all(axis=2)


@dataclass(frozen=True)
class ScaleFactor:
    """A positive multiplicative scale with the number of supporting pairs."""

    s: float
    support: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.s) and self.s > 0.0):
            raise ValueError(f"scale must be finite and > 0, got {self.s}")
        if self.support < 0:
            raise ValueError("support must be >= 0")


@dataclass(frozen=True)
class BBox2D:
    """An inclusive integer pixel box [u_min, u_max] x [v_min, v_max]."""

    u_min: int
    v_min: int
    u_max: int
    v_max: int
    label: str = ""

    def __post_init__(self) -> None:
        for name in ("u_min", "v_min", "u_max", "v_max"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.u_min > self.u_max or self.v_min > self.v_max:
            raise ValueError(f"degenerate bbox {self}")


def _nearest_pixel(u: float, v: float, width: int, height: int) -> tuple[int, int]:
    # Half-up rounding, clamped to the grid.
    col = min(max(int(math.floor(u + 0.5)), 0), width - 1)
    row = min(max(int(math.floor(v + 0.5)), 0), height - 1)
    return col, row


def valid_joint_set(frame: HandFrame, raster: PointRaster, k: CameraIntrinsics,
                    depth_epsilon: float = DEPTH_EPSILON_M) -> list[tuple[int, float, float]]:
    """Joint/raster depth pairs usable for scale estimation.

    A joint contributes (index, joint_z, raster_z) when it sits in front of
    the camera, projects inside the image, and the raster pixel nearest to
    its projection is valid with depth above the epsilon.
    """
    if (raster.height, raster.width) != (k.height, k.width):
        raise ValueError(
            f"raster size {raster.width}x{raster.height} does not match "
            f"intrinsics {k.width}x{k.height}")
    pairs: list[tuple[int, float, float]] = []
    for i in range(JOINT_COUNT):
        x, y, z = frame.joints[i]
        if z <= depth_epsilon:
            continue
        u = k.fx * (x / z) + k.cx
        v = k.fy * (y / z) + k.cy
        if not (0.0 <= u < k.width and 0.0 <= v < k.height):
            continue
        col, row = _nearest_pixel(u, v, raster.width, raster.height)
        point = raster.points[row, col]
        if not np.all(np.isfinite(point)):
            continue
        raster_z = float(point[2])
        if raster_z <= depth_epsilon:
            continue
        pairs.append((i, float(z), raster_z))
    return pairs


def estimate_scale(pairs: list[tuple[int, float, float]]) -> ScaleFactor:
    """Median of joint-depth over raster-depth ratios.

    Raises:
        EmptyOmega: if no pairs are given.
        NonPositiveDepth: if a raster depth <= 0 slipped through filtering.
    """
    if not pairs:
        raise EmptyOmega("no joint/raster depth pairs to estimate scale from")
    ratios = []
    for _, joint_z, raster_z in pairs:
        if raster_z <= 0.0:
            raise NonPositiveDepth(f"raster depth {raster_z} is not positive")
        ratios.append(joint_z / raster_z)
    return ScaleFactor(s=float(np.median(ratios)), support=len(pairs))


def apply_scale(raster: PointRaster, sf: ScaleFactor) -> PointRaster:
    """Multiply every valid point by the scale; invalid pixels pass through."""
    out = np.array(raster.points)
    valid = raster.validity
    out[valid] = out[valid] * sf.s
    return PointRaster(out)


def locate_object(raster: PointRaster, bbox: BBox2D) -> Vec3:
    """Componentwise median of the valid points inside a pixel box.

    Raises:
        ValueError: if the box extends past the raster.
        NoValidPoints: if every pixel in the box is invalid.
    """
    if bbox.u_min < 0 or bbox.v_min < 0 or bbox.u_max >= raster.width \
            or bbox.v_max >= raster.height:
        raise ValueError(
            f"bbox {bbox} exceeds raster {raster.width}x{raster.height}")
    window = raster.points[bbox.v_min:bbox.v_max + 1, bbox.u_min:bbox.u_max + 1]
    mask = np.isfinite(window).all(axis=2)
    if not mask.any():
        raise NoValidPoints(f"no valid raster points inside bbox {bbox}")
    pts = window[mask]
    return Vec3(float(np.median(pts[:, 0])),
                float(np.median(pts[:, 1])),
                float(np.median(pts[:, 2])))
