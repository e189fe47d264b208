"""Per-clip orchestration: filter, calibrate, label, and emit records.

run_visual turns a clip manifest into question/answer records across the
four categories; run_action turns it into per-chunk motion-token records.
Both are deterministic for a fixed config: the only randomness is the
context-window length walk, driven by a generator seeded from (seed,
crc32(clip_id)).

Frames are filtered per hand side by joint visibility, re-split into
segments wherever more than two frame intervals are missing, then sampled
at the configured rate within each segment.  Categories are produced only
where their inputs exist; every skipped candidate is counted under one of
the drop reasons so that candidates == emitted + dropped at each stage.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import SCHEMA_VERSION, ClipManifest, chunk_clip, read_raster, sample_frames
from .errors import NoValidPoints, ParseError
from .geometry import Vec3, transform_to_camera
from .hand_kinematics import (
    DELTA_M_DEFAULT,
    MIN_VISIBLE_DEFAULT,
    WRIST_INDEX,
    HandFrame,
    extract_wrist,
    is_significant,
    joint_visibility,
    keep_frame,
)
from .motion_tokens import MotionTokenSequence, TokenizerConfig, encode_trajectory
from .scale_calibration import apply_scale, estimate_scale, valid_joint_set
from .scale_calibration import locate_object
from .spatial_labeling import GAMMA_DEFAULT
from .vqa_generator import (
    CATEGORIES,
    CATEGORY_CAMERA,
    CATEGORY_HAND,
    CATEGORY_SPATIAL,
    CATEGORY_TASK,
    VqaPair,
    camera_axis_words,
    gen_camera_movement,
    gen_hand_movement,
    gen_spatial_relationship,
    gen_task_completion,
)

DROP_NO_VISIBLE_HAND = "NoVisibleHand"
DROP_EMPTY_OMEGA = "EmptyOmega"
DROP_INSIGNIFICANT = "InsignificantMotion"
DROP_NO_VALID_POINTS = "NoValidPoints"
DROP_MISSING_RASTER = "MissingRaster"

_CATEGORY_ORDER = {name: i for i, name in enumerate(CATEGORIES)}

_CONFIG_KEYS = ("gamma", "min_visible", "delta_m", "k_bins", "rate_hz",
                "chunk_s", "seed", "window_min", "window_max")


@dataclass(frozen=True)
class PipelineConfig:
    gamma: float = GAMMA_DEFAULT
    min_visible: int = MIN_VISIBLE_DEFAULT
    delta_m: float = DELTA_M_DEFAULT
    k_bins: int = 1024
    rate_hz: float = 1.0
    chunk_s: float = 10.0
    seed: int = 0
    window_min: int = 1
    window_max: int = 4

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0 <= self.min_visible <= 21:
            raise ValueError(f"min_visible must be in [0, 21], got {self.min_visible}")
        if self.delta_m < 0:
            raise ValueError(f"delta_m must be >= 0, got {self.delta_m}")
        if not (math.isfinite(self.rate_hz) and self.rate_hz > 0):
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if not (math.isfinite(self.chunk_s) and self.chunk_s > 0):
            raise ValueError(f"chunk_s must be positive, got {self.chunk_s}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed}")
        if not 1 <= self.window_min <= self.window_max:
            raise ValueError("need 1 <= window_min <= window_max")
        self.tokenizer  # validates k_bins

    @property
    def tokenizer(self) -> TokenizerConfig:
        return TokenizerConfig(k_bins=self.k_bins)

    @classmethod
    def build(cls, file_path: str | Path | None = None,
              **overrides) -> "PipelineConfig":
        """Defaults, overridden by a JSON config file, then by keyword flags.

        None-valued overrides are ignored so CLI flags can pass through
        unset options.
        """
        values: dict = {}
        if file_path is not None:
            text = Path(file_path).read_text(encoding="utf-8")
            try:
                loaded = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{file_path}: invalid JSON: {exc}") from exc
            if not isinstance(loaded, dict):
                raise ValueError(f"{file_path}: config must be a JSON object")
            unknown = set(loaded) - set(_CONFIG_KEYS)
            if unknown:
                raise ValueError(f"{file_path}: unknown config keys {sorted(unknown)}")
            values.update(loaded)
        for key, value in overrides.items():
            if key not in _CONFIG_KEYS:
                raise ValueError(f"unknown config override {key!r}")
            if value is not None:
                values[key] = value
        return cls(**values)


@dataclass
class StageStats:
    candidates: int = 0
    emitted: int = 0
    dropped: dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.dropped[reason] = self.dropped.get(reason, 0) + 1

    def balanced(self) -> bool:
        return self.candidates == self.emitted + sum(self.dropped.values())


@dataclass
class PipelineStats:
    """Per-stage bookkeeping; candidates always equal emitted plus dropped."""

    frames: StageStats = field(default_factory=StageStats)
    categories: dict[str, StageStats] = field(
        default_factory=lambda: {c: StageStats() for c in CATEGORIES})
    action: StageStats = field(default_factory=StageStats)

    def check_balance(self) -> None:
        stages = [("frames", self.frames), ("action", self.action)]
        stages += [(c, s) for c, s in self.categories.items()]
        for name, stage in stages:
            if not stage.balanced():
                raise AssertionError(
                    f"stage {name}: {stage.candidates} candidates != "
                    f"{stage.emitted} emitted + {stage.dropped} dropped")

    def to_dict(self) -> dict:
        def one(stage: StageStats) -> dict:
            return {"candidates": stage.candidates, "emitted": stage.emitted,
                    "dropped": dict(sorted(stage.dropped.items()))}
        return {"frames": one(self.frames),
                "categories": {c: one(s) for c, s in self.categories.items()},
                "action": one(self.action)}


# --- record shaping ---------------------------------------------------------

def gt_to_dict(gt, gamma: float) -> dict:
    """Serialize structured ground truth with a stable field order."""
    if hasattr(gt, "rotation"):
        rot = gt.rotation
        return {
            "rotation": {
                "axis": [rot.axis.x, rot.axis.y, rot.axis.z],
                "angle_deg": rot.angle_deg,
                "axis_directions": sorted(camera_axis_words(rot, gamma)),
            },
            "translation": gt_to_dict(gt.translation, gamma),
        }
    return {"v": [gt.v.x, gt.v.y, gt.v.z],
            "distance_m": gt.distance_m,
            "directions": sorted(gt.directions)}


def visual_record_dict(pair: VqaPair, source: str, gamma: float,
                       seed: int) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "clip_id": pair.clip_id,
        "source": source,
        "category": pair.category,
        "frame_ids": list(pair.frame_ids),
        "question": pair.question,
        "answer": pair.answer,
        "gt": gt_to_dict(pair.gt, gamma),
        "gamma": gamma,
        "seed": seed,
    }


def tokenizer_dict(tokenizer: TokenizerConfig) -> dict:
    return {
        "k": tokenizer.k_bins,
        "ranges": {
            "x": list(tokenizer.x_range),
            "y": list(tokenizer.y_range),
            "z": list(tokenizer.z_range),
        },
    }


def action_record_dict(clip_id: str, source: str,
                       chunk_span: tuple[float, float], instruction: str,
                       seq: MotionTokenSequence,
                       tokenizer: TokenizerConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "clip_id": clip_id,
        "source": source,
        "chunk_span": [chunk_span[0], chunk_span[1]],
        "instruction": instruction,
        "tokens": list(seq.tokens),
        "tokenizer": tokenizer_dict(tokenizer),
    }


# --- shared per-clip context ------------------------------------------------

class _ClipContext:
    """Visibility filtering, segment re-splitting, and per-side sampling."""

    def __init__(self, manifest: ClipManifest, cfg: PipelineConfig,
                 stats: PipelineStats):
        self.manifest = manifest
        self.cfg = cfg
        self.timestamps = [f.timestamp_s for f in manifest.frames]
        self.sides = sorted({s for f in manifest.frames for s in f.hands})
        self._hand_cam: dict[tuple[int, str], HandFrame] = {}
        self._rasters: dict[int, object] = {}
        self._calibrations: dict[tuple[int, str], object] = {}

        max_gap = 2.0 / manifest.fps
        self.visible: dict[str, list[int]] = {}
        for side in self.sides:
            kept = []
            for i, frame in enumerate(manifest.frames):
                if side not in frame.hands:
                    continue
                stats.frames.candidates += 1
                mask = joint_visibility(self.hand_cam(i, side), frame.intrinsics)
                if keep_frame(mask, cfg.min_visible):
                    kept.append(i)
                    stats.frames.emitted += 1
                else:
                    stats.frames.drop(DROP_NO_VISIBLE_HAND)
            self.visible[side] = kept

        self.sampled: dict[str, list[list[int]]] = {}
        for side in self.sides:
            segments = self._split_segments(self.visible[side], max_gap)
            lists = []
            for segment in segments:
                seg_t = [self.timestamps[i] for i in segment]
                rel = sample_frames(seg_t, cfg.rate_hz)
                lists.append([segment[r] for r in rel])
            self.sampled[side] = lists

    def _split_segments(self, indices: list[int], max_gap: float) -> list[list[int]]:
        if not indices:
            return []
        segments = [[indices[0]]]
        for prev, nxt in zip(indices, indices[1:]):
            if self.timestamps[nxt] - self.timestamps[prev] > max_gap + 1e-9:
                segments.append([])
            segments[-1].append(nxt)
        return segments

    def hand_cam(self, index: int, side: str) -> HandFrame:
        key = (index, side)
        if key not in self._hand_cam:
            frame = self.manifest.frames[index]
            world = frame.hands[side]
            rows = [transform_to_camera(Vec3.from_array(j), frame.pose).as_array()
                    for j in world.joints]
            self._hand_cam[key] = HandFrame(joints=np.array(rows), side=side,
                                            timestamp_s=world.timestamp_s,
                                            meta=world.meta)
        return self._hand_cam[key]

    def raster(self, index: int):
        if index not in self._rasters:
            self._rasters[index] = read_raster(self.manifest.frames[index].raster_path)
        return self._rasters[index]

    def calibrated_raster(self, index: int, side: str):
        """Scaled raster for one anchor frame, or None when omega is empty."""
        key = (index, side)
        if key not in self._calibrations:
            frame = self.manifest.frames[index]
            pairs = valid_joint_set(self.hand_cam(index, side), self.raster(index),
                                    frame.intrinsics)
            if not pairs:
                self._calibrations[key] = None
            else:
                sf = estimate_scale(pairs)
                self._calibrations[key] = apply_scale(self.raster(index), sf)
        return self._calibrations[key]


def _window_walk(ctx: _ClipContext, cfg: PipelineConfig):
    """Seeded context-window draw; consumption order is part of the format."""
    rng = np.random.default_rng(
        [cfg.seed, zlib.crc32(ctx.manifest.clip_id.encode("utf-8"))])
    windows = []
    for category in (CATEGORY_SPATIAL, CATEGORY_TASK):
        for side in ctx.sides:
            for sampled in ctx.sampled[side]:
                p = 0
                while p < len(sampled):
                    length = int(rng.integers(cfg.window_min, cfg.window_max + 1))
                    windows.append((category, side, tuple(sampled[p:p + length])))
                    p += length
    return windows


def run_visual(manifest: ClipManifest, cfg: PipelineConfig | None = None,
               stats: PipelineStats | None = None) -> list[dict]:
    """All four question categories for one clip, as JSONL-ready dicts."""
    cfg = cfg or PipelineConfig()
    stats = stats if stats is not None else PipelineStats()
    ctx = _ClipContext(manifest, cfg, stats)
    emitted: list[tuple[VqaPair, str, int]] = []

    for category, side, window in _window_walk(ctx, cfg):
        anchor = window[-1]
        frame = manifest.frames[anchor]
        if not frame.objects:
            continue
        stage = stats.categories[category]
        for obj_idx, bbox in enumerate(frame.objects):
            stage.candidates += 1
            if frame.raster_path is None:
                stage.drop(DROP_MISSING_RASTER)
                continue
            scaled = ctx.calibrated_raster(anchor, side)
            if scaled is None:
                stage.drop(DROP_EMPTY_OMEGA)
                continue
            try:
                object_pos = locate_object(scaled, bbox)
            except NoValidPoints:
                stage.drop(DROP_NO_VALID_POINTS)
                continue
            hand = ctx.hand_cam(anchor, side)
            if category == CATEGORY_SPATIAL:
                pair = gen_spatial_relationship(manifest.clip_id, window, hand,
                                                bbox.label, object_pos, cfg.gamma)
            else:
                pair = gen_task_completion(manifest.clip_id, window,
                                           manifest.task_text, hand, bbox.label,
                                           object_pos, cfg.gamma)
            emitted.append((pair, side, obj_idx))
            stage.emitted += 1

    stage = stats.categories[CATEGORY_HAND]
    for side in ctx.sides:
        for sampled in ctx.sampled[side]:
            for a, b in zip(sampled, sampled[1:]):
                stage.candidates += 1
                pair = gen_hand_movement(manifest.clip_id, (a, b),
                                         ctx.hand_cam(a, side),
                                         ctx.hand_cam(b, side), cfg.gamma)
                emitted.append((pair, side, 0))
                stage.emitted += 1

    stage = stats.categories[CATEGORY_CAMERA]
    camera_sampled = sample_frames(manifest, cfg.rate_hz)
    for a, b in zip(camera_sampled, camera_sampled[1:]):
        stage.candidates += 1
        pair = gen_camera_movement(manifest.clip_id, (a, b),
                                   manifest.frames[a].pose,
                                   manifest.frames[b].pose, cfg.gamma)
        emitted.append((pair, "", 0))
        stage.emitted += 1

    emitted.sort(key=lambda item: (item[0].clip_id, item[0].frame_ids,
                                   _CATEGORY_ORDER[item[0].category],
                                   item[1], item[2]))
    stats.check_balance()
    return [visual_record_dict(pair, manifest.source, cfg.gamma, cfg.seed)
            for pair, _, _ in emitted]


def run_action(manifest: ClipManifest, cfg: PipelineConfig | None = None,
               stats: PipelineStats | None = None) -> list[dict]:
    """Per-chunk motion-token records for every hand side that moves enough."""
    cfg = cfg or PipelineConfig()
    stats = stats if stats is not None else PipelineStats()
    ctx = _ClipContext(manifest, cfg, stats)
    records = []
    for a, b in chunk_clip(manifest, cfg.chunk_s):
        for side in ctx.sides:
            stats.action.candidates += 1
            in_chunk = [i for i in ctx.visible[side] if a <= i < b]
            if not in_chunk:
                stats.action.drop(DROP_NO_VISIBLE_HAND)
                continue
            rel = sample_frames([ctx.timestamps[i] for i in in_chunk], cfg.rate_hz)
            chosen = [in_chunk[r] for r in rel]
            trajectory = extract_wrist([ctx.hand_cam(i, side) for i in chosen])
            if not is_significant(trajectory, cfg.delta_m):
                stats.action.drop(DROP_INSIGNIFICANT)
                continue
            sequence = encode_trajectory(trajectory, cfg.tokenizer)
            span = (ctx.timestamps[a], ctx.timestamps[b - 1])
            records.append(action_record_dict(manifest.clip_id, manifest.source,
                                              span, manifest.task_text,
                                              sequence, cfg.tokenizer))
            stats.action.emitted += 1
    stats.check_balance()
    return records


def calibrate_frames(manifest: ClipManifest,
                     cfg: PipelineConfig | None = None) -> list[dict]:
    """Per-frame per-side scale estimates for every frame with a raster."""
    cfg = cfg or PipelineConfig()
    stats = PipelineStats()
    ctx = _ClipContext(manifest, cfg, stats)
    out = []
    for i, frame in enumerate(manifest.frames):
        if frame.raster_path is None:
            continue
        for side in sorted(frame.hands):
            pairs = valid_joint_set(ctx.hand_cam(i, side), ctx.raster(i),
                                    frame.intrinsics)
            if not pairs:
                out.append({"frame": i, "side": side, "error": DROP_EMPTY_OMEGA})
                continue
            sf = estimate_scale(pairs)
            out.append({"frame": i, "side": side, "scale": sf.s,
                        "support": sf.support})
    return out
