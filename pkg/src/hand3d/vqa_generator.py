"""Template-based question/answer pairs over 3D ground truth.

All four categories render from fixed templates so that reruns are
byte-identical.  Rendered text is faithful to the structured ground truth:
every direction word in an answer appears in the ground-truth word set and
vice versa, and the rendered distance is the ground-truth distance rounded
to two decimals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import AxisAngle, CameraPose, Vec3
from .hand_kinematics import WRIST_INDEX, HandFrame
from .spatial_labeling import (
    GAMMA_DEFAULT,
    CameraMotionLabel,
    Displacement3D,
    label_camera_motion,
    label_displacement,
    render_directions,
)

CATEGORY_SPATIAL = "spatial_relationship"
CATEGORY_TASK = "task_completion"
CATEGORY_HAND = "hand_movement"
CATEGORY_CAMERA = "camera_movement"
CATEGORIES = (CATEGORY_SPATIAL, CATEGORY_TASK, CATEGORY_HAND, CATEGORY_CAMERA)


@dataclass(frozen=True)
class VqaPair:
    """One question/answer pair with its structured ground truth."""

    category: str
    question: str
    answer: str
    gt: Displacement3D | CameraMotionLabel
    clip_id: str
    frame_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if not self.question or not self.answer:
            raise ValueError("question and answer must be non-empty")
        frame_ids = tuple(int(i) for i in self.frame_ids)
        if not frame_ids:
            raise ValueError("frame_ids must be non-empty")
        object.__setattr__(self, "frame_ids", frame_ids)


def format_distance(distance_m: float) -> str:
    return f"{distance_m:.2f}"


def round_degrees(angle_deg: float) -> int:
    """Half-up rounding to whole degrees (angles are within [0, 180])."""
    return int(math.floor(angle_deg + 0.5))


def camera_axis_words(rotation: AxisAngle, gamma: float = GAMMA_DEFAULT) -> frozenset[str]:
    """Direction words describing a rendered rotation axis.

    Empty when the angle rounds to zero degrees (no rotation is reported).
    """
    if round_degrees(rotation.angle_deg) == 0:
        return frozenset()
    return label_displacement(rotation.axis, gamma).directions


def _movement_phrase(d: Displacement3D) -> str:
    words = render_directions(d.directions)
    dist = format_distance(d.distance_m)
    if d.distance_m == 0.0:
        return f"did not move, {dist} m"
    if not words:
        return f"moved {dist} m with no dominant axis"
    return f"moved {words} by {dist} m"


def gen_spatial_relationship(clip_id: str, frame_ids: tuple[int, ...],
                             hand: HandFrame, label: str, object_pos: Vec3,
                             gamma: float = GAMMA_DEFAULT,
                             wrist_index: int = WRIST_INDEX) -> VqaPair:
    """Where an object sits relative to the hand in the last context frame."""
    wrist = hand.joint(wrist_index)
    gt = label_displacement(object_pos - wrist, gamma)
    question = (f"Where is the {label} located in 3D relative to "
                "the hand in the last frame?")
    dist = format_distance(gt.distance_m)
    words = render_directions(gt.directions)
    if gt.distance_m == 0.0:
        answer = f"The {label} is at the hand's position, {dist} m away."
    elif not words:
        answer = f"The {label} is {dist} m from the hand with no dominant axis."
    else:
        answer = f"The {label} is {words} of the hand, {dist} m away."
    return VqaPair(CATEGORY_SPATIAL, question, answer, gt, clip_id, frame_ids)


def gen_task_completion(clip_id: str, frame_ids: tuple[int, ...],
                        task_text: str, hand: HandFrame, label: str,
                        object_pos: Vec3, gamma: float = GAMMA_DEFAULT,
                        wrist_index: int = WRIST_INDEX) -> VqaPair:
    """How the hand should move to reach the task-relevant object."""
    wrist = hand.joint(wrist_index)
    gt = label_displacement(object_pos - wrist, gamma)
    question = (f"The task is: {task_text} In which direction and how far "
                f"should the hand move to reach the {label}?")
    dist = format_distance(gt.distance_m)
    words = render_directions(gt.directions)
    if gt.distance_m == 0.0:
        answer = f"No movement is needed, {dist} m."
    elif not words:
        answer = f"Move {dist} m toward the {label}."
    else:
        answer = f"Move {words} by {dist} m."
    return VqaPair(CATEGORY_TASK, question, answer, gt, clip_id, frame_ids)


def gen_hand_movement(clip_id: str, frame_ids: tuple[int, ...],
                      frame_a: HandFrame, frame_b: HandFrame,
                      gamma: float = GAMMA_DEFAULT,
                      wrist_index: int = WRIST_INDEX) -> VqaPair:
    """How the wrist moved between two frames, in camera coordinates."""
    gt = label_displacement(
        frame_b.joint(wrist_index) - frame_a.joint(wrist_index), gamma)
    question = "How did the hand move in 3D between these two frames?"
    dist = format_distance(gt.distance_m)
    words = render_directions(gt.directions)
    if gt.distance_m == 0.0:
        answer = f"No movement, {dist} m."
    elif not words:
        answer = f"The hand moved {dist} m with no dominant axis."
    else:
        answer = f"The hand moved {words} by {dist} m."
    return VqaPair(CATEGORY_HAND, question, answer, gt, clip_id, frame_ids)


def gen_camera_movement(clip_id: str, frame_ids: tuple[int, ...],
                        p1: CameraPose, p2: CameraPose,
                        gamma: float = GAMMA_DEFAULT) -> VqaPair:
    """How the camera rotated and shifted between two frames."""
    gt = label_camera_motion(p1, p2, gamma)
    question = "How did the camera move between these two frames?"
    degrees = round_degrees(gt.rotation.angle_deg)
    axis_words = render_directions(camera_axis_words(gt.rotation, gamma))
    if degrees == 0 and gt.translation.distance_m == 0.0:
        answer = "No rotation, no movement, 0.00 m."
    else:
        if degrees == 0:
            rotation_part = "The camera did not rotate"
        elif axis_words:
            rotation_part = (f"The camera rotated {degrees} degrees about "
                             f"the axis pointing {axis_words}")
        else:
            rotation_part = f"The camera rotated {degrees} degrees about an oblique axis"
        answer = f"{rotation_part} and {_movement_phrase(gt.translation)}."
    return VqaPair(CATEGORY_CAMERA, question, answer, gt, clip_id, frame_ids)
