"""Clip manifests, the binary point-raster codec, sampling, and JSONL output.

A clip manifest is a JSON file describing one recorded clip: per-frame
camera intrinsics and world-to-camera pose, world-frame hand joints per
side, an optional point-raster file, and optional labeled object boxes.
Manifests are the adapter boundary: converters from any particular capture
system produce this format upstream.

Rasters use a small binary container (magic ``PC3R``) holding one float32
3-vector per pixel; invalid pixels are all-three canonical NaN so that
write/read round-trips are bit-exact.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    MissingRaster,
    NonMonotonicTime,
    ParseError,
    SchemaError,
    TruncatedFile,
)
from .geometry import CameraIntrinsics, CameraPose, Rotation3, Vec3
from .hand_kinematics import JOINT_COUNT, SIDES, HandFrame, RawHandMeta
from .scale_calibration import BBox2D, PointRaster

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

RASTER_MAGIC = b"PC3R"
RASTER_VERSION = 1
_HEADER = struct.Struct("<HII")  # version, width, height
_CANONICAL_NAN = np.uint32(0x7FC00000).view(np.float32)

TIMESTAMP_TOLERANCE_S = 1e-3


# --- manifest model ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One frame of a clip; joints are in the world frame."""

    timestamp_s: float
    intrinsics: CameraIntrinsics
    pose: CameraPose
    hands: dict[str, HandFrame] = field(default_factory=dict)
    raster_path: str | None = None
    objects: tuple[BBox2D, ...] = ()

    @property
    def has_raster(self) -> bool:
        return self.raster_path is not None


@dataclass(frozen=True, eq=False)
class ClipManifest:
    clip_id: str
    source: str
    fps: float
    task_text: str
    frames: tuple[FrameRecord, ...]
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if not self.clip_id:
            raise ValueError("clip_id must be non-empty")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise ValueError(f"fps must be positive, got {self.fps}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def timestamps_s(self) -> np.ndarray:
        return np.array([f.timestamp_s for f in self.frames], dtype=float)


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise SchemaError(f"{path}: {msg}")


def _as_number(value, path: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             path, f"expected a number, got {type(value).__name__}")
    _require(math.isfinite(float(value)), path, "must be finite")
    return float(value)


def _as_vector(value, path: str, length: int) -> list[float]:
    _require(isinstance(value, list) and len(value) == length,
             path, f"expected a list of {length} numbers")
    return [_as_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _parse_intrinsics(obj, path: str) -> CameraIntrinsics:
    _require(isinstance(obj, dict), path, "expected an object")
    for key in ("fx", "fy", "cx", "cy", "width", "height"):
        _require(key in obj, path, f"missing field '{key}'")
    try:
        return CameraIntrinsics(
            fx=_as_number(obj["fx"], f"{path}.fx"),
            fy=_as_number(obj["fy"], f"{path}.fy"),
            cx=_as_number(obj["cx"], f"{path}.cx"),
            cy=_as_number(obj["cy"], f"{path}.cy"),
            width=int(_as_number(obj["width"], f"{path}.width")),
            height=int(_as_number(obj["height"], f"{path}.height")),
        )
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _parse_pose(obj, path: str) -> CameraPose:
    _require(isinstance(obj, dict), path, "expected an object")
    _require("rotation" in obj, path, "missing field 'rotation'")
    _require("translation" in obj, path, "missing field 'translation'")
    rows = obj["rotation"]
    _require(isinstance(rows, list) and len(rows) == 3, f"{path}.rotation",
             "expected 3 rows")
    matrix = [_as_vector(row, f"{path}.rotation[{i}]", 3)
              for i, row in enumerate(rows)]
    try:
        rotation = Rotation3(np.array(matrix))
    except Exception as exc:
        raise SchemaError(f"{path}.rotation: {exc}") from exc
    t = _as_vector(obj["translation"], f"{path}.translation", 3)
    return CameraPose(rotation=rotation, translation=Vec3(*t))


def _parse_hand(obj, path: str, side: str, timestamp_s: float) -> HandFrame:
    _require(isinstance(obj, dict), path, "expected an object")
    _require("joints" in obj, path, "missing field 'joints'")
    joints = obj["joints"]
    _require(isinstance(joints, list) and len(joints) == JOINT_COUNT,
             f"{path}.joints", f"expected {JOINT_COUNT} joints")
    rows = [_as_vector(j, f"{path}.joints[{i}]", 3) for i, j in enumerate(joints)]
    meta = None
    if "meta" in obj and obj["meta"] is not None:
        _require(isinstance(obj["meta"], dict), f"{path}.meta", "expected an object")
        meta = RawHandMeta(obj["meta"])
    try:
        return HandFrame(joints=np.array(rows), side=side,
                         timestamp_s=timestamp_s, meta=meta)
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _parse_objects(value, path: str) -> tuple[BBox2D, ...]:
    _require(isinstance(value, list), path, "expected a list")
    boxes = []
    for i, obj in enumerate(value):
        at = f"{path}[{i}]"
        _require(isinstance(obj, dict), at, "expected an object")
        _require(isinstance(obj.get("label"), str) and obj["label"],
                 f"{at}.label", "expected a non-empty string")
        bbox = obj.get("bbox")
        _require(isinstance(bbox, list) and len(bbox) == 4,
                 f"{at}.bbox", "expected [u_min, v_min, u_max, v_max]")
        coords = []
        for j, c in enumerate(bbox):
            _require(isinstance(c, int) and not isinstance(c, bool),
                     f"{at}.bbox[{j}]", "expected an integer")
            coords.append(c)
        try:
            boxes.append(BBox2D(*coords, label=obj["label"]))
        except ValueError as exc:
            raise SchemaError(f"{at}.bbox: {exc}") from exc
    return tuple(boxes)


def parse_manifest(data, base_dir: str | Path | None = None) -> ClipManifest:
    """Validate a decoded manifest object; see load_manifest for files.

    When base_dir is given, raster paths are resolved against it and must
    exist (MissingRaster otherwise).
    """
    _require(isinstance(data, dict), "$", "manifest must be a JSON object")
    _require(data.get("schema_version") == SCHEMA_VERSION, "schema_version",
             f"expected {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    for key in ("clip_id", "source", "task_text"):
        _require(isinstance(data.get(key), str), key, "expected a string")
    _require(data["clip_id"] != "", "clip_id", "must be non-empty")
    fps = _as_number(data.get("fps"), "fps")
    _require(fps > 0, "fps", "must be positive")
    _require(isinstance(data.get("frames"), list), "frames", "expected a list")

    frames: list[FrameRecord] = []
    prev_t = None
    for i, raw in enumerate(data["frames"]):
        at = f"frames[{i}]"
        _require(isinstance(raw, dict), at, "expected an object")
        t = _as_number(raw.get("timestamp_s"), f"{at}.timestamp_s")
        _require(t >= 0, f"{at}.timestamp_s", "must be non-negative")
        if prev_t is not None:
            _require(t > prev_t, f"{at}.timestamp_s",
                     "timestamps must be strictly increasing")
        prev_t = t
        if i == 0:
            t0 = t
        # frame stamps must track the declared rate within 1 ms
        expected = t0 + i / fps
        _require(abs(t - expected) <= TIMESTAMP_TOLERANCE_S + 1e-9,
                 f"{at}.timestamp_s",
                 f"inconsistent with fps={fps} (expected ~{expected:.4f})")

        _require("intrinsics" in raw, at, "missing field 'intrinsics'")
        _require("pose_w2c" in raw, at, "missing field 'pose_w2c'")
        intrinsics = _parse_intrinsics(raw["intrinsics"], f"{at}.intrinsics")
        pose = _parse_pose(raw["pose_w2c"], f"{at}.pose_w2c")

        hands: dict[str, HandFrame] = {}
        if "hands" in raw and raw["hands"] is not None:
            _require(isinstance(raw["hands"], dict), f"{at}.hands",
                     "expected an object")
            for side, hobj in raw["hands"].items():
                _require(side in SIDES, f"{at}.hands.{side}",
                         f"side must be one of {SIDES}")
                hands[side] = _parse_hand(hobj, f"{at}.hands.{side}", side, t)

        raster_path = None
        if raw.get("raster") is not None:
            _require(isinstance(raw["raster"], str) and raw["raster"],
                     f"{at}.raster", "expected a non-empty string")
            if base_dir is not None:
                resolved = Path(base_dir) / raw["raster"]
                if not resolved.is_file():
                    raise MissingRaster(f"{at}.raster: file not found: {resolved}")
                raster_path = str(resolved)
            else:
                raster_path = raw["raster"]

        objects = _parse_objects(raw.get("objects", []), f"{at}.objects")
        frames.append(FrameRecord(timestamp_s=t, intrinsics=intrinsics,
                                  pose=pose, hands=hands,
                                  raster_path=raster_path, objects=objects))

    return ClipManifest(clip_id=data["clip_id"], source=data["source"],
                        fps=fps, task_text=data["task_text"],
                        frames=tuple(frames))


def load_manifest(path: str | Path) -> ClipManifest:
    """Read and validate a clip manifest; raster references must resolve."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    return parse_manifest(data, base_dir=Path(path).parent)


# --- point-raster codec -----------------------------------------------------

def write_raster(raster: PointRaster, path: str | Path) -> None:
    """Serialize a raster; invalid pixels are stamped with the canonical NaN."""
    h, w = raster.height, raster.width
    payload = raster.points.astype("<f4")
    payload[~raster.validity] = _CANONICAL_NAN
    with open(path, "wb") as fh:
        fh.write(RASTER_MAGIC)
        fh.write(_HEADER.pack(RASTER_VERSION, w, h))
        fh.write(payload.tobytes())


def read_raster(path: str | Path) -> PointRaster:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(RASTER_MAGIC) or blob[:4] != RASTER_MAGIC:
        raise BadMagic(f"{path}: not a point-raster file")
    header = blob[4:4 + _HEADER.size]
    if len(header) < _HEADER.size:
        raise TruncatedFile(f"{path}: header cut short")
    version, w, h = _HEADER.unpack(header)
    if version != RASTER_VERSION:
        raise BadMagic(f"{path}: unsupported format version {version}")
    if w == 0 or h == 0:
        raise DimensionMismatch(f"{path}: zero raster dimension {w}x{h}")
    expected = h * w * 3 * 4
    payload = blob[4 + _HEADER.size:]
    if len(payload) < expected:
        raise TruncatedFile(
            f"{path}: payload holds {len(payload)} bytes, header needs {expected}")
    if len(payload) > expected:
        raise DimensionMismatch(
            f"{path}: {len(payload) - expected} trailing bytes after payload")
    points = np.frombuffer(payload, dtype="<f4").reshape(h, w, 3)
    return PointRaster(points.astype(np.float64))


# --- sampling and chunking --------------------------------------------------

def _timestamps(clip) -> np.ndarray:
    if isinstance(clip, ClipManifest):
        t = clip.timestamps_s
    else:
        t = np.asarray(clip, dtype=float)
    if t.ndim != 1:
        raise ValueError(f"timestamps must be 1D, got shape {t.shape}")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise NonMonotonicTime("timestamps must be strictly increasing")
    return t


def sample_frames(clip, rate_hz: float) -> list[int]:
    """Indices of frames nearest to the rate grid over the clip span.

    The grid starts at the first timestamp and steps by 1/rate_hz; each grid
    point picks the nearest frame (ties to the earlier frame) and duplicates
    collapse, so rates at or above the frame rate keep every frame.
    """
    if not (math.isfinite(rate_hz) and rate_hz > 0):
        raise ValueError(f"rate_hz must be positive, got {rate_hz}")
    t = _timestamps(clip)
    if t.size == 0:
        return []
    span = t[-1] - t[0]
    grid = t[0] + np.arange(math.floor(span * rate_hz + 1e-9) + 1) / rate_hz
    pos = np.searchsorted(t, grid)
    picked = []
    for g, p in zip(grid, pos):
        lo = max(p - 1, 0)
        hi = min(p, t.size - 1)
        idx = lo if abs(t[lo] - g) <= abs(t[hi] - g) else hi
        if not picked or picked[-1] != idx:
            picked.append(int(idx))
    return picked


def chunk_clip(clip, chunk_s: float) -> list[tuple[int, int]]:
    """Partition frames into consecutive half-open index spans of <= chunk_s.

    Frame i lands in span floor((t_i - t_0)/chunk_s); the final span may be
    shorter.  Significance filtering of chunks happens downstream, after
    trajectories are extracted per hand side.
    """
    if not (math.isfinite(chunk_s) and chunk_s > 0):
        raise ValueError(f"chunk_s must be positive, got {chunk_s}")
    t = _timestamps(clip)
    if t.size == 0:
        return []
    bins = np.floor((t - t[0]) / chunk_s + 1e-9).astype(int)
    spans = []
    start = 0
    for i in range(1, t.size):
        if bins[i] != bins[start]:
            spans.append((start, i))
            start = i
    spans.append((start, int(t.size)))
    return spans


# --- JSONL emission ---------------------------------------------------------

def jsonl_line(record: dict) -> str:
    """One record as its canonical JSONL line, trailing newline included.

    Compact separators, non-ASCII kept verbatim, NaN/Inf rejected; field
    order is preserved, making emission byte-reproducible.
    """
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False) + "\n"


def _emit_jsonl(records, path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(jsonl_line(record))
            count += 1
    return count


def emit_visual_jsonl(records, path: str | Path) -> int:
    """Write VQA records one JSON object per line; field order is preserved."""
    return _emit_jsonl(records, path)


def emit_action_jsonl(records, path: str | Path) -> int:
    """Write motion-token records one JSON object per line."""
    return _emit_jsonl(records, path)


def read_jsonl(path: str | Path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return records


# --- corpus report ----------------------------------------------------------

def _proportions(counts: dict[str, int], total: int) -> dict[str, float]:
    if total == 0:
        return {}
    return {k: round(100.0 * c / total, 1) for k, c in counts.items()}


@dataclass(frozen=True)
class CorpusReport:
    """Counts and one-decimal percentage proportions by source and category."""

    total: int
    category_counts: dict[str, int]
    source_counts: dict[str, int]
    category_pct: dict[str, float] = field(default=None)
    source_pct: dict[str, float] = field(default=None)

    def __post_init__(self) -> None:
        if sum(self.category_counts.values()) != self.total:
            raise ValueError("category counts must sum to the total")
        if self.source_counts and sum(self.source_counts.values()) != self.total:
            raise ValueError("source counts must sum to the total")
        if self.category_pct is None:
            object.__setattr__(self, "category_pct",
                               _proportions(self.category_counts, self.total))
        if self.source_pct is None:
            object.__setattr__(self, "source_pct",
                               _proportions(self.source_counts, self.total))
        for name, pct in (("category", self.category_pct),
                          ("source", self.source_pct)):
            if pct and abs(sum(pct.values()) - 100.0) > 0.1 + 1e-9:
                log.warning("%s proportions sum to %.2f after rounding",
                            name, sum(pct.values()))

    @classmethod
    def from_counts(cls, category_counts: dict[str, int],
                    source_counts: dict[str, int] | None = None) -> "CorpusReport":
        total = sum(category_counts.values())
        return cls(total=total, category_counts=dict(category_counts),
                   source_counts=dict(source_counts or {}))

    def render(self) -> str:
        lines = [f"total {self.total}"]
        for section, counts, pct in (
                ("category", self.category_counts, self.category_pct),
                ("source", self.source_counts, self.source_pct)):
            for name in sorted(counts, key=lambda k: (-counts[k], k)):
                lines.append(f"{section} {name} {counts[name]} {pct[name]}%")
        return "\n".join(lines)


def corpus_report(records) -> CorpusReport:
    """Tally records by category and source.

    Records without a category field (motion-token records) count under the
    pseudo-category "action".
    """
    category_counts: dict[str, int] = {}
    source_counts: dict[str, int] = {}
    total = 0
    for record in records:
        total += 1
        cat = record.get("category", "action")
        src = record.get("source", "unknown")
        category_counts[cat] = category_counts.get(cat, 0) + 1
        source_counts[src] = source_counts.get(src, 0) + 1
    return CorpusReport(total=total, category_counts=category_counts,
                        source_counts=source_counts)


def report_from_paths(paths) -> CorpusReport:
    def iterate():
        for path in paths:
            yield from read_jsonl(path)
    return corpus_report(iterate())
