"""JSON, RTTM, ROC CSV and SVG timeline writers."""
from __future__ import annotations

import json
from pathlib import Path
from xml.sax.saxutils import escape

from ..errors import DataError
from ..metrics import RocCurve
from ..timeline import format_rttm
from .detect import THRESHOLD, ScoreTimeline

LANE_H = 24
LANE_GAP = 8
LEFT = 60
WIDTH = 900


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise DataError(f"{path}: cannot write output ({exc})") from exc
    return path


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def roc_csv(curves: dict) -> str:
    """``curves``: name -> RocCurve.  One row per ROC point."""
    rows = ["curve,fpr,tpr,threshold"]
    for name, c in curves.items():
        for f, t, th in zip(c.fpr, c.tpr, c.thresholds):
            rows.append(f"{name},{float(f)!r},{float(t)!r},{float(th)!r}")
    return "\n".join(rows) + "\n"


def timeline_svg(scores: ScoreTimeline, threshold: float = THRESHOLD) -> str:
    """One lane per participant, a filled rect per maximal run above ``threshold``."""
    pids = scores.participants
    end = (scores.clip_starts[-1] + scores.clip_duration) if scores.clip_starts else 1.0
    scale = (WIDTH - LEFT - 10) / end
    height = len(pids) * (LANE_H + LANE_GAP) + LANE_GAP + 20
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
           f'viewBox="0 0 {WIDTH} {height}">',
           f'<title>{escape(scores.meeting_id)}</title>']
    for i, pid in enumerate(pids):
        y = LANE_GAP + i * (LANE_H + LANE_GAP)
        out.append(f'<g class="lane" data-participant="{escape(pid)}">')
        out.append(f'<text x="4" y="{y + LANE_H * 0.7:.1f}" font-size="12">{escape(pid)}</text>')
        out.append(f'<rect class="track" x="{LEFT}" y="{y}" width="{end * scale:.2f}" height="{LANE_H}" '
                   f'fill="#eeeeee"/>')
        for a, b in scores.runs(pid, threshold):
            out.append(f'<rect class="span" x="{LEFT + a * scale:.2f}" y="{y}" width="{(b - a) * scale:.2f}" '
                       f'height="{LANE_H}" fill="#3465a4"><title>{a:.2f}-{b:.2f} s</title></rect>')
        out.append("</g>")
    axis_y = height - 6
    out.append(f'<text x="{LEFT}" y="{axis_y}" font-size="10">0 s</text>')
    out.append(f'<text x="{WIDTH - 60}" y="{axis_y}" font-size="10">{end:.2f} s</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_outputs(out_dir, result=None, scores: ScoreTimeline | None = None,
                 roc: dict[str, RocCurve] | None = None, name: str = "result") -> dict:
    """Write whichever artifacts are given; returns kind -> path."""
    out = Path(out_dir)
    written = {}
    if result is not None:
        data = result.to_dict() if hasattr(result, "to_dict") else result
        written["json"] = _write(out / f"{name}.json", dump_json(data))
        timings = getattr(result, "timings", None)
        if timings:
            written["timings"] = _write(out / "timings.json", dump_json(timings))
    if scores is not None:
        written["scores"] = _write(out / "scores.json", dump_json(scores.to_dict()))
        written["rttm"] = _write(out / "hypothesis.rttm", format_rttm(scores.hypothesis(), scores.meeting_id))
        written["svg"] = _write(out / "timeline.svg", timeline_svg(scores))
    if roc:
        written["roc"] = _write(out / "roc.csv", roc_csv(roc))
    return written
