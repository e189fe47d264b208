"""Command-line entry point for the annotation toolkit.

Subcommands cover the full flow: scene synthesis, per-frame calibration,
visual and action annotation, token round-trips, scoring, corpus reports,
and the reference-math self check.

Exit codes: 0 success, 1 validation failure, 2 I/O failure.  Reports go to
stdout; diagnostics are single-line JSON objects on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .dataset_io import (
    emit_action_jsonl,
    emit_visual_jsonl,
    jsonl_line,
    load_manifest,
    report_from_paths,
)
from .errors import Hand3DError
from .eval_metrics import AXES_MODES, score_files
from .geometry import Vec3
from .motion_tokens import detokenize_point, tokenize_point
from .pipeline import (
    PipelineConfig,
    PipelineStats,
    calibrate_frames,
    run_action,
    run_visual,
    tokenizer_dict,
)
from .ref_model_math import self_check
from .synth_oracle import write_demo

_CONFIG_ENV = "HAND3D_CONFIG"


def _diag(**fields) -> None:
    print(json.dumps({"tool": "hand3d", **fields}), file=sys.stderr)


def _config(args) -> PipelineConfig:
    path = args.config or os.environ.get(_CONFIG_ENV) or None
    overrides = {}
    for key in ("gamma", "min_visible", "delta_m", "k_bins", "rate_hz",
                "chunk_s", "seed"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    return PipelineConfig.build(path, **overrides)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline settings")
    group.add_argument("--config", help="JSON settings file; flags override "
                       f"it, and it overrides defaults (or ${_CONFIG_ENV})")
    group.add_argument("--gamma", type=float, help="direction threshold")
    group.add_argument("--min-visible", dest="min_visible", type=int,
                       help="joints required to keep a hand frame")
    group.add_argument("--delta-m", dest="delta_m", type=float,
                       help="significance threshold for wrist motion, metres")
    group.add_argument("--k-bins", dest="k_bins", type=int,
                       help="motion-token bins per axis")
    group.add_argument("--rate-hz", dest="rate_hz", type=float,
                       help="frame sampling rate")
    group.add_argument("--chunk-s", dest="chunk_s", type=float,
                       help="clip chunk length, seconds")
    group.add_argument("--seed", type=int, help="sampling seed")


def _write_lines(records, output: str | None, emitter) -> None:
    if output is None:
        for record in records:
            sys.stdout.write(jsonl_line(record))
        return
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    emitter(records, output)


def _run_clips(paths, jobs, work):
    """Run work(path) across clips; failures are logged, not fatal.

    Returns (results, exit_code) where results are (sort_key, payload)
    pairs from successful clips, sorted for deterministic output.
    """
    results = []
    worst = 0
    with ThreadPoolExecutor(max_workers=jobs or os.cpu_count() or 1) as pool:
        futures = [(path, pool.submit(work, path)) for path in paths]
        for path, future in futures:
            try:
                results.append(future.result())
            except Hand3DError as exc:
                _diag(level="error", input=str(path),
                      error=type(exc).__name__, detail=str(exc))
                worst = max(worst, 1)
            except OSError as exc:
                _diag(level="error", input=str(path),
                      error=type(exc).__name__, detail=str(exc))
                worst = max(worst, 2)
    results.sort(key=lambda item: item[0])
    return results, worst


def _cmd_annotate(args, runner, emitter) -> int:
    cfg = _config(args)

    def work(path):
        clip = load_manifest(path)
        stats = PipelineStats()
        records = runner(clip, cfg, stats)
        _diag(level="info", clip_id=clip.clip_id, records=len(records),
              stats=stats.to_dict())
        return (clip.clip_id, str(path)), records

    results, worst = _run_clips(args.manifests, args.jobs, work)
    pooled = [record for _, records in results for record in records]
    _write_lines(pooled, args.output, emitter)
    return worst


def cmd_annotate_visual(args) -> int:
    return _cmd_annotate(args, run_visual, emit_visual_jsonl)


def cmd_annotate_action(args) -> int:
    return _cmd_annotate(args, run_action, emit_action_jsonl)


def cmd_calibrate(args) -> int:
    cfg = _config(args)

    def work(path):
        clip = load_manifest(path)
        rows = [{"clip_id": clip.clip_id, **row}
                for row in calibrate_frames(clip, cfg)]
        return (clip.clip_id, str(path)), rows

    results, worst = _run_clips(args.manifests, args.jobs, work)
    pooled = [row for _, rows in results for row in rows]
    _write_lines(pooled, args.output, emit_visual_jsonl)
    return worst


def cmd_synth(args) -> int:
    cfg = _config(args)
    paths = write_demo(args.outdir, seed=cfg.seed, cfg=cfg)
    print(json.dumps({key: str(value) if not isinstance(value, list)
                      else [str(p) for p in value]
                      for key, value in paths.items()}, indent=2))
    return 0


def _load_points(path) -> list[Vec3]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        if "points" not in data:
            raise ValueError(f"{path}: expected a 'points' key")
        data = data["points"]
    return [Vec3(float(p[0]), float(p[1]), float(p[2])) for p in data]


def cmd_tokenize(args) -> int:
    cfg = _config(args)
    tokens = []
    for point in _load_points(args.points):
        tokens.extend(tokenize_point(point, cfg.tokenizer))
    payload = {"tokens": tokens, "tokenizer": tokenizer_dict(cfg.tokenizer)}
    text = json.dumps(payload, indent=2) + "\n"
    if args.output is None:
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
    return 0


def cmd_detokenize(args) -> int:
    cfg = _config(args)
    data = json.loads(Path(args.tokens).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        if "tokens" not in data:
            raise ValueError(f"{args.tokens}: expected a 'tokens' key")
        tokens = data["tokens"]
    else:
        tokens = data
    if len(tokens) % 3 != 0:
        raise ValueError(f"token count must be a multiple of 3, got {len(tokens)}")
    points = []
    for i in range(0, len(tokens), 3):
        p = detokenize_point(tuple(tokens[i:i + 3]), cfg.tokenizer)
        points.append([p.x, p.y, p.z])
    text = json.dumps({"points": points}, indent=2) + "\n"
    if args.output is None:
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
    return 0


def cmd_score(args) -> int:
    report = score_files(args.predictions, args.ground_truth,
                         strict=args.strict, axes=args.axes,
                         report_json_path=args.report_json,
                         histogram_csv_path=args.histogram_csv)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_report(args) -> int:
    print(report_from_paths(args.records).render())
    return 0


def cmd_refmath_check(args) -> int:
    failed = 0
    for name, passed, detail in self_check(seed=args.seed, trials=args.trials):
        status = "PASS" if passed else "FAIL"
        print(f"{status} {name}: {detail}")
        failed += 0 if passed else 1
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hand3d",
        description="Deterministic 3D annotation toolkit for manipulation "
                    "clips: VQA pairs, motion tokens, scoring, synthesis.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate-visual",
                       help="generate spatial VQA records from clip manifests",
                       description="Run the visual annotation flow over one "
                                   "or more clip manifests and emit JSONL.")
    p.add_argument("manifests", nargs="+", help="clip manifest JSON paths")
    p.add_argument("-o", "--output", help="output JSONL path (default stdout)")
    p.add_argument("--jobs", type=int, help="parallel clips (default: cores)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_annotate_visual)

    p = sub.add_parser("annotate-action",
                       help="generate motion-token records from clip manifests",
                       description="Run the action annotation flow over one "
                                   "or more clip manifests and emit JSONL.")
    p.add_argument("manifests", nargs="+", help="clip manifest JSON paths")
    p.add_argument("-o", "--output", help="output JSONL path (default stdout)")
    p.add_argument("--jobs", type=int, help="parallel clips (default: cores)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_annotate_action)

    p = sub.add_parser("calibrate",
                       help="report per-frame scale estimates for clips",
                       description="Estimate the metric scale of every "
                                   "raster-bearing frame, per hand side.")
    p.add_argument("manifests", nargs="+", help="clip manifest JSON paths")
    p.add_argument("-o", "--output", help="output JSONL path (default stdout)")
    p.add_argument("--jobs", type=int, help="parallel clips (default: cores)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth",
                       help="write the seeded demo scenes plus ground truth",
                       description="Generate the synthetic demo scenes "
                                   "(static hand, dolly, orbit) with pooled "
                                   "ground-truth files.")
    p.add_argument("-o", "--outdir", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tokenize",
                       help="map 3D points to motion tokens",
                       description="Read a JSON list of [x, y, z] points "
                                   "(or {\"points\": [...]}) and print the "
                                   "flat token sequence.")
    p.add_argument("points", help="JSON file of points")
    p.add_argument("-o", "--output", help="output JSON path (default stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize",
                       help="map motion tokens back to bin-centre points",
                       description="Read a JSON token list (or the tokenize "
                                   "output) and print decoded points.")
    p.add_argument("tokens", help="JSON file of tokens")
    p.add_argument("-o", "--output", help="output JSON path (default stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detokenize)

    p = sub.add_parser("score",
                       help="score prediction records against ground truth",
                       description="Match records by id and report direction "
                                   "scores and distance errors.")
    p.add_argument("predictions", help="predicted records JSONL")
    p.add_argument("ground_truth", help="ground-truth records JSONL")
    p.add_argument("--strict", action=argparse.BooleanOptionalAction,
                   default=True,
                   help="fail on unparseable predictions instead of scoring "
                        "them worst-case")
    p.add_argument("--axes", choices=AXES_MODES, default="all",
                   help="which axes count toward the direction score")
    p.add_argument("--report-json", dest="report_json",
                   help="also write the report as JSON here")
    p.add_argument("--histogram-csv", dest="histogram_csv",
                   help="also write score/error histograms as CSV here")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report",
                       help="summarize record files by category and source",
                       description="Count records per category/source and "
                                   "print one-decimal percentages.")
    p.add_argument("records", nargs="+", help="record JSONL paths")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("refmath-check",
                       help="run the reference-model math self checks",
                       description="Verify fusion collapse, softmax rows, "
                                   "flow derivative, and loss-at-target "
                                   "properties; nonzero exit on violation.")
    p.add_argument("--seed", type=int, default=0, help="property-trial seed")
    p.add_argument("--trials", type=int, default=20,
                   help="random cases per property")
    p.set_defaults(func=cmd_refmath_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Hand3DError as exc:
        _diag(level="error", error=type(exc).__name__, detail=str(exc))
        return 1
    except ValueError as exc:
        _diag(level="error", error="ValueError", detail=str(exc))
        return 1
    except OSError as exc:
        _diag(level="error", error=type(exc).__name__, detail=str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
