"""Hand-joint containers, visibility filtering, and wrist trajectories.

A hand is 21 camera-frame joints in metres; joint 0 is the wrist by default.
Frames whose visible-joint count falls below a threshold are dropped upstream,
and wrist trajectories below a motion threshold are considered insignificant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, NonMonotonicTime
from .geometry import DEPTH_EPSILON_M, CameraIntrinsics, PixelCoord, Vec3, is_visible

JOINT_COUNT = 21
WRIST_INDEX = 0

# A frame is kept when at least this many joints are visible.
MIN_VISIBLE_DEFAULT = 11

# A trajectory is significant when some point strays at least this far
# (metres) from the start.
DELTA_M_DEFAULT = 0.05

SIDES = ("left", "right")


@dataclass(frozen=True, eq=False)
class RawHandMeta:
    """Opaque upstream metadata carried through unmodified."""

    data: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class HandFrame:
    """One hand observation: 21 camera-frame joints at one timestamp."""

    joints: np.ndarray  # (21, 3) metres, camera frame
    side: str
    timestamp_s: float
    meta: RawHandMeta | None = None

    def __post_init__(self) -> None:
        j = np.array(self.joints, dtype=float)
        if j.shape != (JOINT_COUNT, 3):
            raise ValueError(f"joints must have shape (21, 3), got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("joints must be finite")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {self.side!r}")
        if not self.timestamp_s >= 0.0:
            raise ValueError(f"timestamp_s must be >= 0, got {self.timestamp_s}")
        j.flags.writeable = False
        object.__setattr__(self, "joints", j)

    def joint(self, index: int) -> Vec3:
        return Vec3.from_array(self.joints[index])


@dataclass(frozen=True, eq=False)
class WristTrajectory:
    """A strictly time-ordered series of wrist positions for one hand side."""

    timestamps_s: np.ndarray  # (N,)
    points: np.ndarray  # (N, 3) camera frame, metres
    side: str

    def __post_init__(self) -> None:
        t = np.array(self.timestamps_s, dtype=float)
        p = np.array(self.points, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise EmptyInput("trajectory needs at least one point")
        if p.shape != (t.size, 3):
            raise ValueError(f"points shape {p.shape} does not match {t.size} timestamps")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise ValueError("trajectory values must be finite")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise NonMonotonicTime("timestamps must be strictly increasing")
        t.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "timestamps_s", t)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return int(self.timestamps_s.size)


def joint_visibility(frame: HandFrame, k: CameraIntrinsics,
                     depth_epsilon: float = DEPTH_EPSILON_M) -> np.ndarray:
    """Per-joint visibility mask: in front of the camera and inside the image."""
    mask = np.zeros(JOINT_COUNT, dtype=bool)
    for i in range(JOINT_COUNT):
        x, y, z = frame.joints[i]
        if z <= depth_epsilon:
            continue
        px = PixelCoord(k.fx * (x / z) + k.cx, k.fy * (y / z) + k.cy)
        mask[i] = is_visible(px, k)
    return mask


def keep_frame(mask: np.ndarray, min_visible: int = MIN_VISIBLE_DEFAULT) -> bool:
    """Whether a frame has enough visible joints to be usable."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (JOINT_COUNT,):
        raise ValueError(f"expected a (21,) mask, got shape {mask.shape}")
    return int(mask.sum()) >= min_visible


def extract_wrist(frames: list[HandFrame], wrist_index: int = WRIST_INDEX) -> WristTrajectory:
    """Collect one joint across frames into a trajectory.

    Raises:
        EmptyInput: if no frames are given.
        NonMonotonicTime: if frame timestamps are not strictly increasing.
        ValueError: if the frames mix hand sides.
    """
    if not frames:
        raise EmptyInput("cannot extract a trajectory from zero frames")
    side = frames[0].side
    if any(f.side != side for f in frames):
        raise ValueError("all frames must belong to the same hand side")
    t = np.array([f.timestamp_s for f in frames], dtype=float)
    p = np.array([f.joints[wrist_index] for f in frames], dtype=float)
    return WristTrajectory(t, p, side)


def is_significant(traj: WristTrajectory, delta_m: float = DELTA_M_DEFAULT) -> bool:
    """True when some point strays at least delta_m from the first point."""
    if delta_m < 0.0:
        raise ValueError(f"delta_m must be >= 0, got {delta_m}")
    start = traj.points[0]
    excursions = np.linalg.norm(traj.points - start, axis=1)
    return bool(np.max(excursions) >= delta_m)
