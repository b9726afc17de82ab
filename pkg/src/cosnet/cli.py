"""Command-line entry point: ``cosnet {train,summarize,eval,ablate,synth,import}``.

Every failure exits non-zero after printing one JSON object
``{"error": <kind>, "message": <text>}`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig, load_config
from .core import ClipTrack, CosnetError, coarsen_track
from .evaluation import extract_summary, f_score, precision_recall
from .rewards import MODES
from .synthetic import SyntheticSpec, generate_synthetic
from .trainer import evaluate_policy, rollout_summaries, train

log = logging.getLogger("cosnet")


class UsageError(CosnetError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out", help="output directory")
    p.add_argument("--clip-frames", type=int, choices=(16, 32, 48),
                   help="clip length; 32 and 48 average 2 or 3 consecutive 16-frame feature rows")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cosnet", description="Multi-agent compare-and-select video summarization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a shared policy; writes checkpoint and learning curve")
    _common(p)
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--annotations", nargs="+")
    p.add_argument("--checkpoint", help="resume from this checkpoint")

    p = sub.add_parser("summarize", help="write one summary JSON per input video")
    _common(p)
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--annotations", nargs="+")
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("eval", help="F-score table for generated summaries against ground truth")
    _common(p)
    p.add_argument("--summaries", nargs="+", required=True, help="summary JSON files or 0/1 frame masks")
    p.add_argument("--annotations", nargs="+", required=True)

    p = sub.add_parser("ablate", help="train and evaluate every reward mode")
    _common(p)
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--annotations", nargs="+", required=True)
    p.add_argument("--modes", nargs="+", choices=MODES, default=list(MODES))

    p = sub.add_parser("synth", help="write a planted-cluster feature file and annotation file")
    _common(p)
    p.add_argument("--clips", type=int, default=64)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--planted", type=int, default=8)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--segments", type=int, default=1)
    p.add_argument("--video-id", default="synthetic")

    p = sub.add_parser("import", help="convert whitespace-separated text features to a feature file")
    _common(p)
    p.add_argument("--text", required=True)
    p.add_argument("--total-frames", type=int)
    p.add_argument("--video-id")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["mode"] = args.mode
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "checkpoint", None):
        changes["checkpoint"] = args.checkpoint
    cap = os.environ.get("COSNET_THREADS")
    if cap:
        changes["threads"] = max(1, min(cfg.threads, int(cap)))
    return cfg.replace(**changes) if changes else cfg


def _multiplier(args, track: ClipTrack) -> int:
    if not args.clip_frames:
        return 1
    if args.clip_frames % track.f_clip:
        raise UsageError(f"--clip-frames {args.clip_frames} is not a multiple of the file's {track.f_clip}-frame clips")
    return args.clip_frames // track.f_clip


def load_tracks(args, cfg: RunConfig, require_annotations=False) -> list[ClipTrack]:
    annotations = args.annotations or []
    if annotations and len(annotations) != len(args.features):
        raise UsageError(f"{len(args.features)} feature files but {len(annotations)} annotation files")
    if require_annotations and not annotations:
        raise UsageError("annotations are required for this command")
    tracks = []
    for i, feature_path in enumerate(args.features):
        ann = annotations[i] if annotations else None
        track = io.load_track(feature_path, ann, threshold=cfg.threshold)
        track = coarsen_track(track, _multiplier(args, track) if args.clip_frames else cfg.clip_multiplier)
        tracks.append(track)
    return tracks


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_csv(path, header, rows):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    io.atomic_write_text(path, buf.getvalue())


def cmd_train(args) -> dict:
    cfg = resolve_config(args)
    tracks = load_tracks(args, cfg)
    params = io.load_checkpoint(cfg.checkpoint) if cfg.checkpoint else None
    result = train(tracks, cfg.train_config(), params=params)
    out = Path(cfg.out)
    io.save_checkpoint(result.params, out / "checkpoint.csnp")
    write_csv(out / "learning_curve.csv",
              ["update_index", "video_id", "mean_return", "grad_norm", "f_score_if_annotated"],
              [[r.update_index, r.video_id, _fmt(r.mean_return), _fmt(r.grad_norm), _fmt(r.f_score)]
               for r in result.curve])
    io.atomic_write_text(out / "config.txt", cfg.dumps())
    return {"checkpoint": str(out / "checkpoint.csnp"), "curve": str(out / "learning_curve.csv"),
            "updates": len(result.curve)}


def cmd_summarize(args) -> dict:
    cfg = resolve_config(args)
    tracks = load_tracks(args, cfg)
    params = io.load_checkpoint(args.checkpoint)
    tc = cfg.train_config()
    if params.input_dim != tracks[0].D:
        raise UsageError(f"checkpoint expects {params.input_dim}-dim features, got {tracks[0].D}")
    out = Path(cfg.out)
    written = []
    for track in tracks:
        # rewards are only bookkeeping here; unannotated tracks fall back to the unsupervised mode
        run_cfg = tc if (track.annotated or not tc.reward.supervised) else cfg.replace(mode="U").train_config()
        trace = rollout_summaries(track, params, run_cfg, 1)[0]
        summary = extract_summary(trace, track)
        score = f_score(summary.mask, track.annotations) if track.annotated and track.annotations.any() else None
        path = out / f"{track.video_id}.summary.json"
        io.write_summary(path, summary, score)
        written.append(str(path))
    return {"summaries": written}


def cmd_eval(args) -> dict:
    cfg = resolve_config(args)
    if len(args.summaries) != len(args.annotations):
        raise UsageError(f"{len(args.summaries)} summaries but {len(args.annotations)} annotation files")
    rows = []
    for gen_path, gt_path in zip(args.summaries, args.annotations):
        gt, _ = io.read_annotations(gt_path, threshold=cfg.threshold)
        gen = io.read_generated_mask(gen_path, len(gt))
        p, r = precision_recall(gen, gt)
        rows.append([Path(gen_path).name.split(".")[0], _fmt(p), _fmt(r), _fmt(f_score(gen, gt))])
    path = Path(cfg.out) / "eval.csv"
    write_csv(path, ["video_id", "precision", "recall", "f_score"], rows)
    return {"table": str(path), "rows": len(rows)}


def cmd_ablate(args) -> dict:
    cfg = resolve_config(args)
    tracks = load_tracks(args, cfg, require_annotations=True)
    rows = []
    for mode in args.modes:
        tc = cfg.replace(mode=mode).train_config()
        result = train(tracks, tc)
        scores = [evaluate_policy(t, result.params, tc) for t in tracks]
        rows.append([mode, _fmt(np.mean(scores))] + [_fmt(s) for s in scores])
        log.info("mode %s: F = %.2f", mode, np.mean(scores))
    path = Path(cfg.out) / "ablation.csv"
    write_csv(path, ["mode", "f_score"] + [t.video_id for t in tracks], rows)
    return {"table": str(path), "modes": list(args.modes)}


def cmd_synth(args) -> dict:
    cfg = resolve_config(args)
    spec = SyntheticSpec(M=args.clips, D=args.dim, f_clip=args.clip_frames or cfg.f_clip, planted=args.planted,
                         margin=args.margin, noise=args.noise, segments=args.segments, seed=cfg.seed,
                         video_id=args.video_id)
    track = generate_synthetic(spec)
    out = Path(cfg.out)
    feature_path = out / f"{spec.video_id}.csnf"
    annotation_path = out / f"{spec.video_id}.ann"
    io.save_track(track, feature_path, annotation_path)
    return {"features": str(feature_path), "annotations": str(annotation_path)}


def cmd_import(args) -> dict:
    cfg = resolve_config(args)
    track = io.import_text_features(args.text, f_clip=args.clip_frames or cfg.f_clip,
                                    f_total=args.total_frames, video_id=args.video_id)
    path = Path(cfg.out) / f"{track.video_id}.csnf"
    io.save_track(track, path)
    return {"features": str(path), "clips": track.M, "dim": track.D}


COMMANDS = {
    "train": cmd_train,
    "summarize": cmd_summarize,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "import": cmd_import,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        result = COMMANDS[args.command](args)
    except (CosnetError, OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
