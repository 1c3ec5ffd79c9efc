"""Speaker timelines and RTTM I/O."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError


@dataclass(frozen=True, order=True)
class Segment:
    start: float
    end: float
    label: str

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class SpeakerTimeline:
    segments: list[Segment] = field(default_factory=list)

    def __post_init__(self):
        segs = []
        for s in self.segments:
            if not isinstance(s, Segment):
                s = Segment(float(s[0]), float(s[1]), str(s[2]))
            if not s.start < s.end:
                raise DataError(f"segment {s} has start >= end")
            segs.append(s)
        self.segments = sorted(segs)

    @property
    def labels(self) -> list[str]:
        """Labels in order of first appearance."""
        seen = {}
        for s in self.segments:
            seen.setdefault(s.label, None)
        return list(seen)

    @property
    def total_speech(self) -> float:
        return sum(s.duration for s in self.segments)

    def for_label(self, label) -> list[Segment]:
        return [s for s in self.segments if s.label == label]

    def end_time(self) -> float:
        return max((s.end for s in self.segments), default=0.0)

    def active_labels(self, t: float) -> list[Segment]:
        return [s for s in self.segments if s.start <= t < s.end]

    def merged(self, gap: float = 0.0) -> "SpeakerTimeline":
        """Fuse same-label segments that touch or are at most ``gap`` apart."""
        out = []
        for label in self.labels:
            cur = None
            for s in self.for_label(label):
                if cur is not None and s.start - cur.end <= gap:
                    cur = Segment(cur.start, max(cur.end, s.end), label)
                else:
                    if cur is not None:
                        out.append(cur)
                    cur = s
            out.append(cur)
        return SpeakerTimeline(out)


def format_rttm(timeline: SpeakerTimeline, file_id: str) -> str:
    lines = [f"SPEAKER {file_id} 1 {s.start:.3f} {s.duration:.3f} <NA> <NA> {s.label} <NA> <NA>"
             for s in timeline.segments]
    return "".join(line + "\n" for line in lines)


def write_rttm(path, timeline: SpeakerTimeline, file_id: str):
    Path(path).write_text(format_rttm(timeline, file_id))


def parse_rttm(text: str, file_id: str | None = None) -> SpeakerTimeline:
    segs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] != "SPEAKER":
            continue
        if len(parts) < 8:
            raise DataError(f"RTTM line {lineno}: expected at least 8 fields")
        if file_id is not None and parts[1] != file_id:
            continue
        try:
            start, dur = float(parts[3]), float(parts[4])
        except ValueError as exc:
            raise DataError(f"RTTM line {lineno}: bad time field") from exc
        if dur <= 0:
            continue
        segs.append(Segment(start, start + dur, parts[7]))
    return SpeakerTimeline(segs)


def read_rttm(path, file_id: str | None = None) -> SpeakerTimeline:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such RTTM file")
    return parse_rttm(path.read_text(), file_id)
