"""Pinhole-camera and rigid-pose primitives.

Conventions used throughout the package:

* Camera frame: x points right, y points down, z points forward along the
  optical axis.  Units are metres.
* Poses are world-to-camera: ``p_cam = R @ p_world + t``.
* Pixel coordinates are continuous; the pixel at integer (u, v) samples the
  scene along the ray through that grid point.

All values are immutable after construction; constructors validate their
invariants and raise on violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth, NotARotation

# A projected point closer than this to the camera plane is rejected.
DEPTH_EPSILON_M = 0.01

# Rotations built through the public constructor must be orthonormal to this
# tolerance; raw matrices handed to to_axis_angle get the looser check.
ROTATION_CONSTRUCTION_ATOL = 1e-9
ROTATION_INPUT_ATOL = 1e-6

# Angles at or below this are snapped to the zero rotation.
ANGLE_EPSILON_RAD = 1e-7

# Above this angle the skew part of R is too small to give a stable axis, so
# the axis is recovered from the symmetric part instead.
_NEAR_PI_SWITCH_RAD = 3.0


@dataclass(frozen=True)
class Vec3:
    """A 3D point or direction in metres."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"Vec3.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, arr) -> "Vec3":
        a = np.asarray(arr, dtype=float).reshape(3)
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)


@dataclass(frozen=True)
class PixelCoord:
    """Continuous pixel coordinates (u along width, v along height)."""

    u: float
    v: float


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels plus the image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (math.isfinite(self.fx) and math.isfinite(self.fy)
                and math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValueError("intrinsics must be finite")
        if not (int(self.width) >= 1 and int(self.height) >= 1):
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))


@dataclass(frozen=True, eq=False)
class Rotation3:
    """A proper rotation matrix (orthonormal, determinant +1)."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise NotARotation(f"rotation must be 3x3, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NotARotation("rotation contains non-finite entries")
        _check_rotation(m, ROTATION_CONSTRUCTION_ATOL)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Rotation3":
        return cls(np.eye(3))


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera rigid transform: p_cam = R @ p_world + t."""

    rotation: Rotation3
    translation: Vec3

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(Rotation3.identity(), Vec3(0.0, 0.0, 0.0))


@dataclass(frozen=True)
class AxisAngle:
    """A rotation as a unit axis and an angle in degrees within [0, 180].

    The zero rotation is represented by a zero axis and angle 0.
    """

    axis: Vec3
    angle_deg: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.angle_deg <= 180.0:
            raise ValueError(f"angle_deg must lie in [0, 180], got {self.angle_deg}")
        n = self.axis.norm()
        if n == 0.0:
            if self.angle_deg != 0.0:
                raise ValueError("zero axis requires zero angle")
        elif abs(n - 1.0) > 1e-9:
            raise ValueError(f"axis must be unit length (|axis| = {n})")


def _check_rotation(m: np.ndarray, atol: float) -> None:
    gram_err = float(np.max(np.abs(m.T @ m - np.eye(3))))
    det_err = abs(float(np.linalg.det(m)) - 1.0)
    if gram_err > atol or det_err > atol:
        raise NotARotation(
            f"matrix is not a rotation (orthogonality error {gram_err:.3e}, "
            f"determinant error {det_err:.3e}, tolerance {atol:.0e})")


def transform_to_camera(p_world: Vec3, pose: CameraPose) -> Vec3:
    """Map a world-frame point into the camera frame of the given pose."""
    p = pose.rotation.matrix @ p_world.as_array() + pose.translation.as_array()
    return Vec3.from_array(p)


def project(p_cam: Vec3, k: CameraIntrinsics,
            depth_epsilon: float = DEPTH_EPSILON_M) -> PixelCoord:
    """Project a camera-frame point through the pinhole model.

    Raises:
        NonPositiveDepth: if the point is at or behind the near plane,
            i.e. z <= depth_epsilon.
    """
    if p_cam.z <= depth_epsilon:
        raise NonPositiveDepth(
            f"cannot project point with z = {p_cam.z} (epsilon {depth_epsilon})")
    u = k.fx * (p_cam.x / p_cam.z) + k.cx
    v = k.fy * (p_cam.y / p_cam.z) + k.cy
    return PixelCoord(u, v)


def is_visible(px: PixelCoord, k: CameraIntrinsics) -> bool:
    """True when the pixel lies inside the image rectangle [0, w) x [0, h)."""
    return 0.0 <= px.u < k.width and 0.0 <= px.v < k.height


def compose(second: CameraPose, first: CameraPose) -> CameraPose:
    """The transform that applies `first` and then `second`."""
    r = second.rotation.matrix @ first.rotation.matrix
    t = second.rotation.matrix @ first.translation.as_array() + second.translation.as_array()
    return CameraPose(Rotation3(r), Vec3.from_array(t))


def relative_pose(p1: CameraPose, p2: CameraPose) -> CameraPose:
    """The transform from frame-1 camera coordinates to frame-2 camera coordinates.

    Satisfies compose(relative_pose(p1, p2), p1) == p2.
    """
    r_rel = p2.rotation.matrix @ p1.rotation.matrix.T
    t_rel = p2.translation.as_array() - r_rel @ p1.translation.as_array()
    return CameraPose(Rotation3(r_rel), Vec3.from_array(t_rel))


def camera_shift(rel: CameraPose) -> Vec3:
    """Where the second camera sits, expressed in the first camera's frame.

    For a relative pose from `relative_pose(p1, p2)` this is the translation a
    viewer at camera 1 experiences: a camera that moved along its own optical
    axis yields a positive z shift.
    """
    r = rel.rotation.matrix
    t = rel.translation.as_array()
    return Vec3.from_array(-r.T @ t)


def to_axis_angle(r, angle_eps_rad: float = ANGLE_EPSILON_RAD) -> AxisAngle:
    """Decompose a rotation into a unit axis and an angle in [0, 180] degrees.

    Accepts a Rotation3 or a raw 3x3 array; raw input is validated with a
    1e-6 orthonormality tolerance.  The angle is acos((trace - 1) / 2),
    evaluated in atan2 form so that values near 0 and 180 degrees stay
    accurate.  The axis comes from the skew-symmetric part of R except near
    180 degrees, where that part vanishes and the axis is recovered from the
    dominant column of the symmetric rank-one part (equal to (R + I)/2 at
    exactly 180 degrees).

    Angles at or below angle_eps_rad collapse to the zero rotation.

    Raises:
        NotARotation: if a raw matrix fails the orthonormality check.
    """
    if isinstance(r, Rotation3):
        m = r.matrix
    else:
        m = np.asarray(r, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise NotARotation(f"expected a finite 3x3 matrix, got shape {m.shape}")
        _check_rotation(m, ROTATION_INPUT_ATOL)

    trace = float(m[0, 0] + m[1, 1] + m[2, 2])
    cos_t = min(1.0, max(-1.0, (trace - 1.0) / 2.0))
    skew = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    sin_t = 0.5 * float(np.linalg.norm(skew))
    angle = math.atan2(sin_t, cos_t)

    if angle <= angle_eps_rad:
        return AxisAngle(Vec3(0.0, 0.0, 0.0), 0.0)

    if angle < _NEAR_PI_SWITCH_RAD:
        axis = skew / (2.0 * sin_t)
    else:
        # (sym(R) - cos * I) / (1 - cos) equals the outer product u u^T; the
        # denominator is near 2 here, so the extraction stays well conditioned.
        outer = (0.5 * (m + m.T) - cos_t * np.eye(3)) / (1.0 - cos_t)
        j = int(np.argmax(np.diag(outer)))
        col = outer[:, j]
        axis = col / np.linalg.norm(col)
        if float(skew @ axis) < 0.0:
            axis = -axis
    axis = axis / np.linalg.norm(axis)
    return AxisAngle(Vec3.from_array(axis), math.degrees(angle))


def rotation_from_axis_angle(aa: AxisAngle) -> Rotation3:
    """Rebuild the rotation matrix for an axis-angle value (Rodrigues formula)."""
    theta = math.radians(aa.angle_deg)
    u = aa.axis.as_array()
    n = float(np.linalg.norm(u))
    if n == 0.0:
        return Rotation3.identity()
    u = u / n
    k = np.array([
        [0.0, -u[2], u[1]],
        [u[2], 0.0, -u[0]],
        [-u[1], u[0], 0.0],
    ])
    m = np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)
    return Rotation3(m)
