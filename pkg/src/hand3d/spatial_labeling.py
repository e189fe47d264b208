"""Discrete direction labels for displacements and camera motion.

A displacement is labeled per axis: the axis contributes a word when the
magnitude of its normalized component exceeds the threshold gamma.  Words
follow the camera convention (+x right, +y down, +z forward).  Camera motion
between two poses decomposes into an axis-angle rotation and the labeled
translation of the camera centre as experienced by the viewer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    AxisAngle,
    CameraPose,
    Vec3,
    camera_shift,
    relative_pose,
    to_axis_angle,
)
from .hand_kinematics import WRIST_INDEX, HandFrame

GAMMA_DEFAULT = 0.2

# Axis words, positive direction first.
AXIS_WORDS = (("right", "left"), ("down", "up"), ("forward", "backward"))
DIRECTION_VOCABULARY = frozenset(w for pair in AXIS_WORDS for w in pair)


@dataclass(frozen=True)
class Displacement3D:
    """A displacement with its distance and per-axis direction words."""

    v: Vec3
    distance_m: float
    directions: frozenset[str]

    def __post_init__(self) -> None:
        if abs(self.distance_m - self.v.norm()) > 1e-12 * max(1.0, self.v.norm()):
            raise ValueError("distance_m must equal |v|")
        if not self.directions <= DIRECTION_VOCABULARY:
            raise ValueError(f"unknown direction words: {self.directions - DIRECTION_VOCABULARY}")
        for pos, neg in AXIS_WORDS:
            if pos in self.directions and neg in self.directions:
                raise ValueError(f"contradictory words {pos!r} and {neg!r}")


@dataclass(frozen=True)
class CameraMotionLabel:
    """Camera motion between two frames: a rotation plus a labeled shift."""

    rotation: AxisAngle
    translation: Displacement3D


def label_displacement(v: Vec3, gamma: float = GAMMA_DEFAULT) -> Displacement3D:
    """Label a displacement with per-axis direction words.

    The zero vector labels as no movement (empty word set).  Any component of
    v / |v| whose magnitude exceeds gamma contributes its word, so for
    gamma < 1/sqrt(3) every non-zero displacement gets at least one word.
    """
    if not 0.0 <= gamma:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    arr = v.as_array()
    distance = float(np.linalg.norm(arr))
    words = []
    if distance > 0.0:
        unit = arr / distance
        for axis, (pos, neg) in enumerate(AXIS_WORDS):
            if abs(unit[axis]) > gamma:
                words.append(pos if unit[axis] > 0.0 else neg)
    return Displacement3D(v=v, distance_m=distance, directions=frozenset(words))


def label_camera_motion(p1: CameraPose, p2: CameraPose,
                        gamma: float = GAMMA_DEFAULT) -> CameraMotionLabel:
    """Decompose the motion between two poses into rotation and shift labels.

    The rotation is the axis-angle form of the frame-1-to-frame-2 relative
    rotation.  The translation labels the second camera centre expressed in
    the first camera's coordinates, so a camera that advanced along its own
    optical axis labels as forward.
    """
    rel = relative_pose(p1, p2)
    rotation = to_axis_angle(rel.rotation)
    shift = camera_shift(rel)
    return CameraMotionLabel(rotation=rotation,
                             translation=label_displacement(shift, gamma))


def hand_object_relation(hand: HandFrame, object_pos: Vec3,
                         gamma: float = GAMMA_DEFAULT,
                         wrist_index: int = WRIST_INDEX) -> Displacement3D:
    """Label where an object sits relative to a hand's wrist."""
    wrist = hand.joint(wrist_index)
    return label_displacement(object_pos - wrist, gamma)


def axis_sign(directions: frozenset[str], axis: int) -> int:
    """-1, 0, or +1 for the word present on an axis (0 when absent)."""
    pos, neg = AXIS_WORDS[axis]
    if pos in directions:
        return 1
    if neg in directions:
        return -1
    return 0


def render_directions(directions: frozenset[str]) -> str:
    """Deterministic phrase for a word set, in x, y, z axis order."""
    ordered = []
    for axis in range(3):
        sign = axis_sign(directions, axis)
        if sign != 0:
            ordered.append(AXIS_WORDS[axis][0 if sign > 0 else 1])
    if not ordered:
        return ""
    if len(ordered) == 1:
        return ordered[0]
    return ", ".join(ordered[:-1]) + " and " + ordered[-1]
