"""Seeded synthetic scenes with exactly known ground truth.

Scenes are built so the pipeline's answers are forced, not approximated:

* The camera of a scene carrying hands or objects is the identity pose, so
  world and camera frames coincide and hand coordinates reach the pipeline
  unchanged.
* Object centers are snapped onto pixel-center rays and rendered as flat
  axis-aligned patches filling an odd-sided pixel box, so the pipeline's
  per-box median lands exactly on the center pixel's point.
* Rasters hold analytic scene points divided by the true scale, with each
  hand joint stamped into its own nearest pixel, so every joint/raster
  depth ratio equals the true scale and the median recovers it to float32
  file precision (well inside 1e-6).
* All label and rendered-distance decisions are checked to sit far from
  their thresholds, so the tiny float32 perturbation cannot flip them.

Moving-camera scenes (dolly, orbit) carry no hands or rasters; their
camera-motion ground truth is closed-form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io import load_manifest, sample_frames, chunk_clip, write_raster
from .dataset_io import SCHEMA_VERSION, emit_action_jsonl, emit_visual_jsonl
from .geometry import CameraIntrinsics, CameraPose, Rotation3, Vec3, project
from .hand_kinematics import JOINT_COUNT, HandFrame, extract_wrist, is_significant
from .hand_kinematics import joint_visibility
from .motion_tokens import encode_trajectory
from .pipeline import (
    PipelineConfig,
    _CATEGORY_ORDER,
    action_record_dict,
    visual_record_dict,
)
from .scale_calibration import BBox2D, PointRaster, _nearest_pixel
from .vqa_generator import (
    VqaPair,
    gen_camera_movement,
    gen_hand_movement,
    gen_spatial_relationship,
    gen_task_completion,
)

BAND_PX = 4  # invalid border band in every rendered raster
BACKGROUND_Z_M = 2.0

# rigid hand: wrist plus a ring of 20 offsets with mild depth variation
_JOINT_OFFSETS = tuple(
    (0.018 * math.cos(2.0 * math.pi * i / 20.0),
     0.018 * math.sin(2.0 * math.pi * i / 20.0),
     0.004 * ((i % 5) - 2))
    for i in range(1, 21))


@dataclass(frozen=True)
class ObjectSpec:
    label: str
    position: Vec3  # nominal; generation snaps it onto a pixel-center ray
    bbox_half: int = 2

    def __post_init__(self) -> None:
        if self.bbox_half < 1:
            raise ValueError("bbox_half must be >= 1 (odd-sided box)")


@dataclass(frozen=True)
class SceneSpec:
    name: str
    seed: int
    n_frames: int
    camera: tuple  # ("static",) | ("dolly", (dx,dy,dz)) | ("orbit", radius, deg/frame)
    true_scale: float = 1.0
    hand_path: tuple | None = None  # ("line"|"arc", Vec3 endpoints/control)
    objects: tuple[ObjectSpec, ...] = ()
    fps: float = 10.0
    width: int = 128
    height: int = 128
    focal_px: float = 300.0
    task_text: str = "move the hand."

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if not self.true_scale > 0:
            raise ValueError("true_scale must be positive")
        if self.width < 8 or self.height < 8:
            raise ValueError("resolution must be at least 8x8")
        if self.camera[0] not in ("static", "dolly", "orbit"):
            raise ValueError(f"unknown camera mode {self.camera[0]!r}")
        if self.camera[0] != "static" and (self.hand_path or self.objects):
            # exactness of hand/object ground truth relies on identity poses
            raise ValueError("hands and objects require a static camera")
        if self.hand_path and self.hand_path[0] not in ("line", "arc"):
            raise ValueError(f"unknown hand path {self.hand_path[0]!r}")

    @property
    def clip_id(self) -> str:
        return f"synth-{self.name}-{self.seed}"

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(fx=self.focal_px, fy=self.focal_px,
                                cx=(self.width - 1) / 2.0,
                                cy=(self.height - 1) / 2.0,
                                width=self.width, height=self.height)


@dataclass
class SceneBundle:
    """A generated scene: manifest data, rasters, and its ground truth."""

    spec: SceneSpec
    manifest_dict: dict
    rasters: dict[int, PointRaster]
    visual_records: list[dict]
    action_records: list[dict]
    meta: dict

    @property
    def clip_id(self) -> str:
        return self.spec.clip_id


def _ray_point(u: int, v: int, z: float, k: CameraIntrinsics) -> Vec3:
    """The 3D point at depth z whose projection is exactly pixel (u, v)."""
    return Vec3((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z)


def _poses(spec: SceneSpec) -> list[CameraPose]:
    mode = spec.camera[0]
    if mode == "static":
        return [CameraPose.identity()] * spec.n_frames
    if mode == "dolly":
        step = spec.camera[1]
        return [CameraPose(Rotation3.identity(),
                           Vec3(-step[0] * i, -step[1] * i, -step[2] * i))
                for i in range(spec.n_frames)]
    radius, deg_per_frame = spec.camera[1], spec.camera[2]
    poses = []
    for i in range(spec.n_frames):
        phi = math.radians(deg_per_frame * i)
        c, s = math.cos(phi), math.sin(phi)
        rot = Rotation3(np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]))
        poses.append(CameraPose(rot, Vec3(0.0, 0.0, radius)))
    return poses


def _wrist_at(spec: SceneSpec, i: int) -> Vec3:
    kind = spec.hand_path[0]
    tau = i / (spec.n_frames - 1) if spec.n_frames > 1 else 0.0
    if kind == "line":
        start, end = spec.hand_path[1], spec.hand_path[2]
        return Vec3(start.x + (end.x - start.x) * tau,
                    start.y + (end.y - start.y) * tau,
                    start.z + (end.z - start.z) * tau)
    start, control, end = spec.hand_path[1], spec.hand_path[2], spec.hand_path[3]
    a, b, c = (1 - tau) ** 2, 2 * (1 - tau) * tau, tau ** 2
    return Vec3(a * start.x + b * control.x + c * end.x,
                a * start.y + b * control.y + c * end.y,
                a * start.z + b * control.z + c * end.z)


def _hand_at(spec: SceneSpec, i: int) -> HandFrame:
    wrist = _wrist_at(spec, i)
    joints = np.empty((JOINT_COUNT, 3))
    joints[0] = (wrist.x, wrist.y, wrist.z)
    for j, (dx, dy, dz) in enumerate(_JOINT_OFFSETS, start=1):
        joints[j] = (wrist.x + dx, wrist.y + dy, wrist.z + dz)
    return HandFrame(joints=joints, side="right",
                     timestamp_s=i / spec.fps)


def _snap_objects(spec: SceneSpec) -> list[tuple[str, Vec3, BBox2D]]:
    k = spec.intrinsics
    snapped = []
    for obj in spec.objects:
        z = obj.position.z
        px = project(obj.position, k)
        u0, v0 = _nearest_pixel(px.u, px.v, k.width, k.height)
        h = obj.bbox_half
        bbox = BBox2D(u0 - h, v0 - h, u0 + h, v0 + h, label=obj.label)
        snapped.append((obj.label, _ray_point(u0, v0, z, k), bbox))
    return snapped


def _assert_decision_margins(v: Vec3, gamma: float) -> None:
    """Reject geometry whose labels or rendered distance sit on a knife edge.

    The pipeline sees object positions perturbed at float32 level (~1e-7
    relative); require at least 1e-4 of slack on every threshold.
    """
    d = v.norm()
    if d == 0.0:
        return
    frac = (d * 100.0) % 1.0
    if abs(frac - 0.5) <= 1e-3:
        raise ValueError(f"distance {d} too close to a 2-decimal boundary")
    for comp in (v.x / d, v.y / d, v.z / d):
        if abs(abs(comp) - gamma) <= 1e-4:
            raise ValueError(f"direction component {comp} too close to gamma")


def _render_raster(spec: SceneSpec, hand: HandFrame,
                   objects: list[tuple[str, Vec3, BBox2D]]) -> PointRaster:
    k = spec.intrinsics
    h, w = spec.height, spec.width
    cols = np.arange(w, dtype=float)
    rows = np.arange(h, dtype=float)
    pts = np.empty((h, w, 3))
    pts[..., 0] = (cols[None, :] - k.cx) * BACKGROUND_Z_M / k.fx
    pts[..., 1] = (rows[:, None] - k.cy) * BACKGROUND_Z_M / k.fy
    pts[..., 2] = BACKGROUND_Z_M

    occupied: set[tuple[int, int]] = set()
    for _, pos, bbox in objects:
        for row in range(bbox.v_min, bbox.v_max + 1):
            for col in range(bbox.u_min, bbox.u_max + 1):
                point = _ray_point(col, row, pos.z, k)
                pts[row, col] = (point.x, point.y, point.z)
                occupied.add((row, col))

    stamped: set[tuple[int, int]] = set()
    for j in range(JOINT_COUNT):
        joint = hand.joint(j)
        px = project(joint, k)
        col, row = _nearest_pixel(px.u, px.v, k.width, k.height)
        if (row, col) in stamped:
            raise ValueError(f"joint pixel collision at ({row}, {col})")
        if (row, col) in occupied:
            raise ValueError("hand overlaps an object box; move the object")
        if row < BAND_PX or row >= h - BAND_PX or col < BAND_PX or col >= w - BAND_PX:
            raise ValueError("hand too close to the invalid border band")
        stamped.add((row, col))
        pts[row, col] = (joint.x, joint.y, joint.z)

    for _, _, bbox in objects:
        if (bbox.v_min < BAND_PX or bbox.v_max >= h - BAND_PX
                or bbox.u_min < BAND_PX or bbox.u_max >= w - BAND_PX):
            raise ValueError("object box touches the invalid border band")

    pts /= spec.true_scale
    pts[:BAND_PX, :] = np.nan
    pts[-BAND_PX:, :] = np.nan
    pts[:, :BAND_PX] = np.nan
    pts[:, -BAND_PX:] = np.nan
    return PointRaster(pts)


def _manifest_dict(spec: SceneSpec, poses: list[CameraPose],
                   hands: dict[int, HandFrame],
                   objects: list[tuple[str, Vec3, BBox2D]],
                   raster_frames: list[int]) -> dict:
    k = spec.intrinsics
    frames = []
    for i in range(spec.n_frames):
        pose = poses[i]
        frame: dict = {
            "timestamp_s": i / spec.fps,
            "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
                           "width": k.width, "height": k.height},
            "pose_w2c": {
                "rotation": [[float(x) for x in row] for row in pose.rotation.matrix],
                "translation": [pose.translation.x, pose.translation.y,
                                pose.translation.z],
            },
        }
        if i in hands:
            frame["hands"] = {
                hands[i].side: {"joints": [[float(x) for x in row]
                                           for row in hands[i].joints]}}
        if i in raster_frames:
            frame["raster"] = f"raster_{i:05d}.pc3r"
            frame["objects"] = [
                {"label": label,
                 "bbox": [bbox.u_min, bbox.v_min, bbox.u_max, bbox.v_max]}
                for label, _, bbox in objects]
        frames.append(frame)
    return {"schema_version": SCHEMA_VERSION, "clip_id": spec.clip_id,
            "source": "synth", "fps": spec.fps, "task_text": spec.task_text,
            "frames": frames}


def _all_windows(sampled: list[int], wmin: int, wmax: int) -> list[tuple[int, ...]]:
    windows = []
    for start in range(len(sampled)):
        for length in range(wmin, wmax + 1):
            if start + length <= len(sampled):
                windows.append(tuple(sampled[start:start + length]))
    return windows


def generate(spec: SceneSpec, cfg: PipelineConfig | None = None) -> SceneBundle:
    """Build one scene plus the ground truth the pipeline must recover.

    The ground truth enumerates every context window the seeded walk could
    select (all contiguous windows of the sampled frames, window_min to
    window_max long), so any pipeline run with the same non-seed settings
    produces a subset of these records, value-identical by id.
    """
    cfg = cfg or PipelineConfig()
    k = spec.intrinsics
    timestamps = [i / spec.fps for i in range(spec.n_frames)]
    poses = _poses(spec)
    objects = _snap_objects(spec)
    sampled = sample_frames(timestamps, cfg.rate_hz)

    hands: dict[int, HandFrame] = {}
    if spec.hand_path is not None:
        for i in range(spec.n_frames):
            hand = _hand_at(spec, i)
            if int(joint_visibility(hand, k).sum()) != JOINT_COUNT:
                raise ValueError(f"hand not fully visible at frame {i}")
            hands[i] = hand

    rasters: dict[int, PointRaster] = {}
    raster_frames: list[int] = []
    if hands and objects:
        raster_frames = list(sampled)
        for i in raster_frames:
            rasters[i] = _render_raster(spec, hands[i], objects)

    emitted: list[tuple[VqaPair, str, int]] = []
    if hands:
        side = hands[sampled[0]].side
        for window in _all_windows(sampled, cfg.window_min, cfg.window_max):
            anchor = window[-1]
            if anchor not in raster_frames or not objects:
                continue
            hand = hands[anchor]
            wrist = hand.joint(0)
            for obj_idx, (label, pos, _) in enumerate(objects):
                _assert_decision_margins(pos - wrist, cfg.gamma)
                pair = gen_spatial_relationship(spec.clip_id, window, hand,
                                                label, pos, cfg.gamma)
                emitted.append((pair, side, obj_idx))
                pair = gen_task_completion(spec.clip_id, window, spec.task_text,
                                           hand, label, pos, cfg.gamma)
                emitted.append((pair, side, obj_idx))
        for a, b in zip(sampled, sampled[1:]):
            pair = gen_hand_movement(spec.clip_id, (a, b), hands[a], hands[b],
                                     cfg.gamma)
            emitted.append((pair, side, 0))
    for a, b in zip(sampled, sampled[1:]):
        pair = gen_camera_movement(spec.clip_id, (a, b), poses[a], poses[b],
                                   cfg.gamma)
        emitted.append((pair, "", 0))
    emitted.sort(key=lambda item: (item[0].clip_id, item[0].frame_ids,
                                   _CATEGORY_ORDER[item[0].category],
                                   item[1], item[2]))
    visual = [visual_record_dict(pair, "synth", cfg.gamma, spec.seed)
              for pair, _, _ in emitted]

    action: list[dict] = []
    if hands:
        for a, b in chunk_clip(timestamps, cfg.chunk_s):
            indices = list(range(a, b))
            rel = sample_frames([timestamps[i] for i in indices], cfg.rate_hz)
            chosen = [indices[r] for r in rel]
            trajectory = extract_wrist([hands[i] for i in chosen])
            if not is_significant(trajectory, cfg.delta_m):
                continue
            sequence = encode_trajectory(trajectory, cfg.tokenizer)
            action.append(action_record_dict(
                spec.clip_id, "synth", (timestamps[a], timestamps[b - 1]),
                spec.task_text, sequence, cfg.tokenizer))

    meta = {
        "clip_id": spec.clip_id,
        "scene": spec.name,
        "seed": spec.seed,
        "true_scale": spec.true_scale,
        "n_frames": spec.n_frames,
        "sampled_frames": list(sampled),
        "raster_frames": raster_frames,
        "objects": [{"label": label, "position": [pos.x, pos.y, pos.z]}
                    for label, pos, _ in objects],
    }
    return SceneBundle(spec=spec,
                       manifest_dict=_manifest_dict(spec, poses, hands,
                                                    objects, raster_frames),
                       rasters=rasters, visual_records=visual,
                       action_records=action, meta=meta)


def demo_scenes(seed: int = 0, cfg: PipelineConfig | None = None) -> list[SceneBundle]:
    """Three complementary scenes: static hand+objects, dolly, orbit."""
    rng = np.random.default_rng([seed, 17])
    s_true = float(rng.uniform(0.5, 3.0))
    specs = [
        SceneSpec(name="static", seed=seed, n_frames=31, camera=("static",),
                  true_scale=s_true,
                  hand_path=("line", Vec3(-0.06, 0.03, 0.55),
                             Vec3(0.06, -0.03, 0.75)),
                  objects=(ObjectSpec("cup", Vec3(0.126, -0.102, 0.9), 2),
                           ObjectSpec("plate", Vec3(-0.176, 0.176, 1.2), 3)),
                  task_text="pick up the cup."),
        SceneSpec(name="dolly", seed=seed, n_frames=21,
                  camera=("dolly", (0.0, 0.0, 0.03))),
        SceneSpec(name="orbit", seed=seed, n_frames=21,
                  camera=("orbit", 1.5, 0.5)),
    ]
    return [generate(spec, cfg) for spec in specs]


def write_scene(bundle: SceneBundle, outdir: str | Path) -> Path:
    """Write manifest and rasters; returns the manifest path after a
    validating re-load."""
    scene_dir = Path(outdir) / bundle.clip_id
    scene_dir.mkdir(parents=True, exist_ok=True)
    for i, raster in bundle.rasters.items():
        write_raster(raster, scene_dir / f"raster_{i:05d}.pc3r")
    manifest_path = scene_dir / "manifest.json"
    manifest_path.write_text(json.dumps(bundle.manifest_dict, indent=1) + "\n",
                             encoding="utf-8")
    load_manifest(manifest_path)
    return manifest_path


def write_demo(outdir: str | Path, seed: int = 0,
               cfg: PipelineConfig | None = None) -> dict:
    """Write the demo scenes plus pooled ground-truth files.

    Ground truth is pooled in clip-id order, matching an annotation run
    over the manifests in sorted path order.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    bundles = sorted(demo_scenes(seed, cfg), key=lambda b: b.clip_id)
    manifest_paths = [write_scene(b, outdir) for b in bundles]
    visual = [r for b in bundles for r in b.visual_records]
    action = [r for b in bundles for r in b.action_records]
    emit_visual_jsonl(visual, outdir / "gt_visual.jsonl")
    emit_action_jsonl(action, outdir / "gt_action.jsonl")
    meta = {"schema_version": SCHEMA_VERSION, "seed": seed,
            "scenes": [b.meta for b in bundles]}
    (outdir / "gt_meta.json").write_text(json.dumps(meta, indent=1) + "\n",
                                         encoding="utf-8")
    return {"manifests": manifest_paths,
            "gt_visual": outdir / "gt_visual.jsonl",
            "gt_action": outdir / "gt_action.jsonl",
            "gt_meta": outdir / "gt_meta.json"}
