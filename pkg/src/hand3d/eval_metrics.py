"""Scoring of predicted spatial answers against ground truth.

Each sample contributes a per-axis direction score (0 to 3) and an absolute
distance error in meters.  Structured predictions are primary; a lenient
text parser adapts free-text model outputs.  File-level scoring aligns
prediction and ground-truth records by id and aggregates into a report with
histograms.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import IdMismatch, ParseIncomplete
from .dataset_io import read_jsonl
from .spatial_labeling import AXIS_WORDS, DIRECTION_VOCABULARY, axis_sign

DEFAULT_DISTANCE_EDGES = (0.0, 0.01, 0.05, 0.1, 0.2, 0.5)
AXES_MODES = ("all", "gt-present")

_DECIMAL_RE = re.compile(r"\d+\.\d+")
_WORD_RES = {word: re.compile(rf"\b{word}\b", re.IGNORECASE)
             for pair in AXIS_WORDS for word in pair}


@dataclass(frozen=True)
class SpatialPrediction:
    """A direction word set plus a distance, the two scored quantities."""

    directions: frozenset
    distance_m: float

    def __post_init__(self) -> None:
        words = frozenset(self.directions)
        bad = words - DIRECTION_VOCABULARY
        if bad:
            raise ValueError(f"unknown direction words: {sorted(bad)}")
        for pos, neg in AXIS_WORDS:
            if pos in words and neg in words:
                raise ValueError(f"conflicting words on one axis: {pos}/{neg}")
        if not (self.distance_m >= 0):
            raise ValueError(f"distance_m must be >= 0, got {self.distance_m}")
        object.__setattr__(self, "directions", words)
        object.__setattr__(self, "distance_m", float(self.distance_m))


def direction_score(pred: SpatialPrediction, gt: SpatialPrediction,
                    axes: str = "all") -> int:
    """Count axes where the predicted word state equals the true one.

    With axes="all" a matching absence counts, so the score is always out
    of 3.  With axes="gt-present" only axes carrying a ground-truth word are
    scored, so the maximum equals the number of true words.
    """
    if axes not in AXES_MODES:
        raise ValueError(f"axes must be one of {AXES_MODES}, got {axes!r}")
    score = 0
    for axis in range(3):
        g = axis_sign(gt.directions, axis)
        if axes == "gt-present" and g == 0:
            continue
        if axis_sign(pred.directions, axis) == g:
            score += 1
    return score


def distance_error(pred: SpatialPrediction, gt: SpatialPrediction) -> float:
    return abs(pred.distance_m - gt.distance_m)


def parse_answer(text: str) -> SpatialPrediction:
    """Extract direction words and a distance from free text.

    The distance is the first decimal number (a digit string containing a
    dot, so bare integers such as rotation degrees are passed over); absent
    distance raises ParseIncomplete.  Per axis the earliest-occurring word
    wins, which also resolves contradictions like "right left".
    """
    match = _DECIMAL_RE.search(text)
    if match is None:
        raise ParseIncomplete(f"no decimal distance found in: {text!r}")
    distance = float(match.group())
    words = set()
    for pair in AXIS_WORDS:
        hits = [(m.start(), word) for word in pair
                for m in [_WORD_RES[word].search(text)] if m is not None]
        if hits:
            words.add(min(hits)[1])
    return SpatialPrediction(frozenset(words), distance)


def prediction_from_record(record: dict) -> SpatialPrediction:
    """Pull the scored quantities out of a JSONL record.

    Precedence: explicit directions/distance_m fields, then a structured gt
    block (camera-motion records score their translation part), then free
    answer text.
    """
    if "directions" in record and "distance_m" in record:
        return SpatialPrediction(frozenset(record["directions"]),
                                 float(record["distance_m"]))
    gt = record.get("gt")
    if isinstance(gt, dict):
        part = gt.get("translation", gt)
        return SpatialPrediction(frozenset(part["directions"]),
                                 float(part["distance_m"]))
    text = record.get("answer_text", record.get("answer"))
    if isinstance(text, str):
        return parse_answer(text)
    raise ParseIncomplete("record has neither structured fields nor answer text")


def assign_record_ids(records) -> list[str]:
    """Deterministic ids: clip/category/frame-window plus a tiebreak ordinal.

    Records sharing (clip_id, category, frame_ids), such as the two hand
    sides or several labeled objects, get ordinals in file order.
    """
    seen: dict[tuple, int] = {}
    ids = []
    for record in records:
        if "id" in record:
            ids.append(str(record["id"]))
            continue
        frames = tuple(int(f) for f in record.get("frame_ids", ()))
        key = (record.get("clip_id", ""), record.get("category", ""), frames)
        ordinal = seen.get(key, 0)
        seen[key] = ordinal + 1
        frame_part = "f" + "-".join(str(f) for f in frames)
        ids.append(f"{key[0]}/{key[1]}/{frame_part}/{ordinal}")
    return ids


@dataclass(frozen=True)
class ScoreReport:
    n: int
    mean_distance_error_m: float
    mean_direction_score: float
    direction_hist: tuple[int, int, int, int]
    distance_edges: tuple[float, ...]
    distance_hist: tuple[int, ...]
    axes: str = "all"

    def __post_init__(self) -> None:
        if sum(self.direction_hist) != self.n:
            raise ValueError("direction histogram must sum to n")
        if sum(self.distance_hist) != self.n:
            raise ValueError("distance histogram must sum to n")
        if len(self.distance_hist) != len(self.distance_edges):
            raise ValueError("need one distance bin per edge (last is open-ended)")
        if not 0.0 <= self.mean_direction_score <= 3.0:
            raise ValueError("mean direction score out of [0, 3]")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_distance_error_m": self.mean_distance_error_m,
            "mean_direction_score": self.mean_direction_score,
            "direction_hist": list(self.direction_hist),
            "distance_edges": list(self.distance_edges),
            "distance_hist": list(self.distance_hist),
            "axes": self.axes,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n",
                              encoding="utf-8")

    def write_histogram_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "lower", "upper", "count"])
            for score, count in enumerate(self.direction_hist):
                writer.writerow(["direction_score", score, score, count])
            edges = list(self.distance_edges) + [float("inf")]
            for i, count in enumerate(self.distance_hist):
                writer.writerow(["distance_error_m", edges[i], edges[i + 1], count])


def _distance_bin(error: float, edges: tuple[float, ...]) -> int:
    idx = 0
    for i, edge in enumerate(edges):
        if error >= edge:
            idx = i
    return idx


def build_report(scored: list[tuple[int, float]], axes: str = "all",
                 distance_edges: tuple[float, ...] = DEFAULT_DISTANCE_EDGES,
                 ) -> ScoreReport:
    """Aggregate (direction_score, distance_error) pairs."""
    if distance_edges[0] != 0.0 or list(distance_edges) != sorted(set(distance_edges)):
        raise ValueError("distance_edges must start at 0.0 and increase")
    n = len(scored)
    dir_hist = [0, 0, 0, 0]
    dist_hist = [0] * len(distance_edges)
    for score, error in scored:
        dir_hist[score] += 1
        dist_hist[_distance_bin(error, distance_edges)] += 1
    mean_dir = sum(s for s, _ in scored) / n if n else 0.0
    mean_err = sum(e for _, e in scored) / n if n else 0.0
    return ScoreReport(n=n, mean_distance_error_m=mean_err,
                       mean_direction_score=mean_dir,
                       direction_hist=tuple(dir_hist),
                       distance_edges=tuple(distance_edges),
                       distance_hist=tuple(dist_hist), axes=axes)


def score_records(pred_records: list[dict], gt_records: list[dict],
                  strict: bool = True, axes: str = "all",
                  distance_edges: tuple[float, ...] = DEFAULT_DISTANCE_EDGES,
                  ) -> ScoreReport:
    """Score aligned record lists; ids must match exactly as sets.

    With strict off, an unparseable prediction contributes the worst case:
    direction score 0 and a distance error equal to the true distance.
    """
    pred_ids = assign_record_ids(pred_records)
    gt_ids = assign_record_ids(gt_records)
    for name, ids in (("prediction", pred_ids), ("ground-truth", gt_ids)):
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IdMismatch(f"duplicate {name} ids: {dupes[:5]}")
    if set(pred_ids) != set(gt_ids):
        only_pred = sorted(set(pred_ids) - set(gt_ids))
        only_gt = sorted(set(gt_ids) - set(pred_ids))
        raise IdMismatch(
            f"id sets differ: {len(only_pred)} only in predictions "
            f"(e.g. {only_pred[:3]}), {len(only_gt)} only in ground truth "
            f"(e.g. {only_gt[:3]})")
    if not pred_ids:
        raise IdMismatch("no records to score")

    by_id = dict(zip(pred_ids, pred_records))
    scored = []
    for rid, gt_record in zip(gt_ids, gt_records):
        gt = prediction_from_record(gt_record)
        try:
            pred = prediction_from_record(by_id[rid])
        except ParseIncomplete:
            if strict:
                raise
            scored.append((0, gt.distance_m))
            continue
        scored.append((direction_score(pred, gt, axes), distance_error(pred, gt)))
    return build_report(scored, axes=axes, distance_edges=distance_edges)


def score_files(pred_path, gt_path, strict: bool = True, axes: str = "all",
                distance_edges: tuple[float, ...] = DEFAULT_DISTANCE_EDGES,
                report_json_path=None, histogram_csv_path=None) -> ScoreReport:
    report = score_records(read_jsonl(pred_path), read_jsonl(gt_path),
                           strict=strict, axes=axes,
                           distance_edges=distance_edges)
    if report_json_path is not None:
        report.write_json(report_json_path)
    if histogram_csv_path is not None:
        report.write_histogram_csv(histogram_csv_path)
    return report
