"""``asdfusion`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .. import audio as A
from .. import video as V
from ..diarization import diarize, hot_encode
from ..errors import ConfigError, DataError, NumericError
from ..fusion import load_checkpoint, save_checkpoint
from ..metrics import der, macro_micro_auc, roc_curve
from ..timeline import read_rttm, write_rttm
from .config import MeetingManifest, RunConfig
from .crossval import cross_validate
from .detect import THRESHOLD, ScoreTimeline, run_detect, train_on_meetings, turn_silence_means
from .features import clip_labels
from .outputs import dump_json, emit_outputs, timeline_svg, _write
from .synth import synth_fixture

log = logging.getLogger("asdfusion")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _parse_bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _parse_sizes(s):
    s = s.strip()
    if s.startswith("{"):
        return json.loads(s)
    try:
        return {k.strip(): int(v) for k, v in (item.split("=") for item in s.split(",") if item)}
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected name=size,...: {s!r}") from exc


def _config_parent():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run configuration (override fields of --config)")
    g.add_argument("--config", help="JSON file mirroring RunConfig")
    conv = {"modalities": str, "embed_sizes": _parse_sizes, "attention_projection": _parse_bool}
    for f in fields(RunConfig):
        typ = conv.get(f.name) or {"int": int, "float": float, "str": str}.get(str(f.type), str)
        g.add_argument(f"--{f.name}", type=typ, default=None)
    return p


def _run_config(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    return RunConfig.load(args.config, overrides)


def _fmt(path):
    return "csv" if str(path).endswith(".csv") else "bin"


def _save_matrix(path: Path, matrix, fmt):
    if fmt == "csv":
        A.save_features_csv(path.with_suffix(".csv"), matrix)
    else:
        A.save_features(path.with_suffix(".asdf"), matrix)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    res = synth_fixture(args.out, args.participants, args.duration, args.turn, args.gap, args.seed,
                        args.fps, args.frame_size, meeting_id=args.meeting_id)
    print(res.manifest_path)


def cmd_extract_audio(args):
    sig = A.read_wav(args.audio)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clips = A.slice_audio_clips(sig)
    for k, c in enumerate(clips):
        spec = A.spectrogram(c)
        if not args.raw:
            spec = A.normalize_clip(spec)
        _save_matrix(out / f"spectrogram_{k:05d}", spec.matrix, args.format)
    _save_matrix(out / "mfcc", A.mfcc(sig).matrix, args.format)
    print(f"{len(clips)} spectrogram clips and MFCCs written to {out}")


def cmd_extract_flow(args):
    frames = V.list_frames(args.frames)
    boxes = V.read_boxes(args.boxes) if args.boxes else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for clip in V.iter_clips(frames, args.fps, boxes=boxes):
        flow = V.flow_magnitude_clip(clip).tensor[0]
        _save_matrix(out / f"flow_{clip.start_index:06d}", flow.reshape(flow.shape[0], -1), args.format)
        n += 1
    print(f"{n} flow clips written to {out}")


def cmd_diarize(args):
    sig = A.read_wav(args.audio)
    timeline = diarize(sig)
    file_id = args.file_id or Path(args.audio).stem
    write_rttm(args.out, timeline, file_id)
    if args.hot_vectors:
        n = int(sig.duration * args.fps)
        hv = hot_encode(timeline, np.arange(n) / args.fps, args.dim)
        _save_matrix(Path(args.hot_vectors), hv.matrix, _fmt(args.hot_vectors))
    print(f"{len(timeline.labels)} speakers, {len(timeline.segments)} segments -> {args.out}")


def cmd_train(args):
    cfg = _run_config(args)
    manifests = [MeetingManifest.load(m) for m in args.manifest]
    model, history = train_on_meetings(manifests, cfg, cache_dir=args.cache_dir)
    out = Path(args.out or Path(cfg.output_dir) / "model.asdm")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    _write(out.with_suffix(".history.json"), dump_json({"loss": history, "config": cfg.to_dict()}))
    print(out)


def cmd_detect(args):
    model = load_checkpoint(args.model)
    cfg = _run_config(args) if args.config else None
    scores = run_detect(MeetingManifest.load(args.manifest), model, cfg, cache_dir=args.cache_dir)
    for kind, path in emit_outputs(args.out, scores=scores).items():
        print(f"{kind}: {path}")


def cmd_evaluate(args):
    scores = ScoreTimeline.load(args.scores)
    if args.reference:
        ref = read_rttm(args.reference)
        labels = {p: clip_labels(ref, p, scores.clip_starts, scores.clip_duration, args.label_overlap)
                  for p in scores.participants}
    elif scores.labels:
        ref, labels = None, scores.labels
    else:
        raise DataError("no ground truth: pass --reference or score a meeting that has an RTTM")
    report = macro_micro_auc({p: (scores.scores[p], labels[p]) for p in scores.participants})
    result = {"meeting_id": scores.meeting_id, "auc": report.to_dict()}
    curves = {"micro": roc_curve(np.concatenate([scores.scores[p] for p in scores.participants]),
                                 np.concatenate([labels[p] for p in scores.participants]))}
    for p in scores.participants:
        if p not in report.excluded:
            curves[p] = roc_curve(scores.scores[p], labels[p])
    if ref is not None:
        result["der"] = der(ref, scores.hypothesis(args.threshold), collar=args.collar).to_dict()
        means = {}
        for p in scores.participants:
            try:
                turn, silence = turn_silence_means(scores, ref, p)
                means[p] = {"turn": turn, "silence": silence}
            except DataError:
                continue
        result["turn_silence_means"] = means
    for kind, path in emit_outputs(args.out, result=result, roc=curves, name="evaluation").items():
        print(f"{kind}: {path}")
    print(f"macro AUC {report.macro_auc:.4f}  micro AUC {report.micro_auc:.4f}")


def cmd_cross_validate(args):
    cfg = _run_config(args)
    manifests = [MeetingManifest.load(m) for m in args.manifest]
    record = cross_validate(manifests, cfg, cache_dir=args.cache_dir)
    for kind, path in emit_outputs(args.out or cfg.output_dir, result=record).items():
        print(f"{kind}: {path}")
    print(f"macro AUC {record.macro_mean:.4f} +- {record.macro_std:.4f}")


def cmd_plot(args):
    scores = ScoreTimeline.load(args.scores)
    _write(Path(args.out), timeline_svg(scores, args.threshold))
    print(args.out)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asdfusion", description="Multimodal active speaker detection.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    cfg = _config_parent()

    s = sub.add_parser("synth", help="generate a synthetic meeting")
    s.add_argument("--out", required=True)
    s.add_argument("--participants", type=int, default=4)
    s.add_argument("--duration", type=float, default=60.0)
    s.add_argument("--turn", type=float, default=2.0)
    s.add_argument("--gap", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fps", type=float, default=25.0)
    s.add_argument("--frame-size", type=int, default=224)
    s.add_argument("--meeting-id", default="synth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract-audio", help="spectrogram clips and MFCCs from a WAV file")
    s.add_argument("--audio", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("bin", "csv"), default="bin")
    s.add_argument("--raw", action="store_true", help="skip per-clip normalization")
    s.set_defaults(func=cmd_extract_audio)

    s = sub.add_parser("extract-flow", help="optical-flow magnitude clips from a frame directory")
    s.add_argument("--frames", required=True)
    s.add_argument("--boxes")
    s.add_argument("--fps", type=float, default=25.0)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("bin", "csv"), default="bin")
    s.set_defaults(func=cmd_extract_flow)

    s = sub.add_parser("diarize", help="binary-key diarization of a WAV file")
    s.add_argument("--audio", required=True)
    s.add_argument("--out", required=True, help="RTTM output path")
    s.add_argument("--file-id")
    s.add_argument("--hot-vectors", help="also write per-frame hot vectors (.asdf or .csv)")
    s.add_argument("--fps", type=float, default=25.0)
    s.add_argument("--dim", type=int, default=8)
    s.set_defaults(func=cmd_diarize)

    s = sub.add_parser("train", parents=[cfg], help="train a fusion model on meetings")
    s.add_argument("--manifest", nargs="+", required=True)
    s.add_argument("--out", help="checkpoint path (default <output_dir>/model.asdm)")
    s.add_argument("--cache-dir")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("detect", parents=[cfg], help="score every participant of a meeting")
    s.add_argument("--manifest", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cache-dir")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("evaluate", help="AUC, ROC and DER of a score timeline")
    s.add_argument("--scores", required=True)
    s.add_argument("--reference", help="ground-truth RTTM (default: labels stored with the scores)")
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=float, default=THRESHOLD)
    s.add_argument("--collar", type=float, default=0.0)
    s.add_argument("--label-overlap", type=float, default=0.5)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("cross-validate", parents=[cfg], help="k-fold cross-validation over meetings")
    s.add_argument("--manifest", nargs="+", required=True)
    s.add_argument("--out")
    s.add_argument("--cache-dir")
    s.set_defaults(func=cmd_cross_validate)

    s = sub.add_parser("plot", help="SVG speaker-activity timeline from a score file")
    s.add_argument("--scores", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=float, default=THRESHOLD)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
