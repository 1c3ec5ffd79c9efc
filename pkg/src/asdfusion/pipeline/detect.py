"""Training on meetings and per-participant detection with one shared model."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..fusion import Dataset, FusionModel, predict, train
from ..timeline import Segment, SpeakerTimeline
from .config import MeetingManifest, RunConfig
from .features import MeetingFeatures, extract_meeting

log = logging.getLogger(__name__)

THRESHOLD = 0.5


@dataclass
class ScoreTimeline:
    """Speaker probability per participant on a clip grid shared by all participants."""
    meeting_id: str
    clip_starts: list
    clip_duration: float
    scores: dict                       # pid -> list of floats
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.clip_starts = [float(t) for t in self.clip_starts]
        self.scores = {k: [float(s) for s in v] for k, v in self.scores.items()}
        self.labels = {k: [int(s) for s in v] for k, v in (self.labels or {}).items()}
        for pid, s in self.scores.items():
            if len(s) != len(self.clip_starts):
                raise DataError(f"participant {pid}: {len(s)} scores for {len(self.clip_starts)} clips")

    @property
    def participants(self):
        return list(self.scores)

    def runs(self, pid, threshold: float = THRESHOLD):
        """Maximal runs of clips scoring above ``threshold`` as (start, end) times."""
        above = np.asarray(self.scores[pid]) > threshold
        out, k = [], 0
        while k < len(above):
            if above[k]:
                j = k
                while j + 1 < len(above) and above[j + 1]:
                    j += 1
                out.append((self.clip_starts[k], self.clip_starts[j] + self.clip_duration))
                k = j + 1
            else:
                k += 1
        return out

    def hypothesis(self, threshold: float = THRESHOLD) -> SpeakerTimeline:
        return SpeakerTimeline([Segment(a, b, pid) for pid in self.scores for a, b in self.runs(pid, threshold)])

    def to_dict(self):
        return {"meeting_id": self.meeting_id, "clip_starts": self.clip_starts,
                "clip_duration": self.clip_duration, "scores": self.scores, "labels": self.labels}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ScoreTimeline":
        try:
            return cls(**json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"{path}: cannot read score timeline ({exc})") from exc


def check_compatible(model: FusionModel, config: RunConfig):
    want = [(m.name, m.kind, m.size) for m in config.model_config().modalities]
    have = [(m.name, m.kind, m.size) for m in model.config.modalities]
    if want != have or model.config.attention != (config.fusion == "attention"):
        raise ConfigError(f"model modalities {have} (attention={model.config.attention}) "
                          f"do not match the configuration {want} (fusion={config.fusion})")


def train_on_meetings(manifests, config: RunConfig, cache_dir=None, features=None):
    """Fresh model trained on every participant stream of every meeting."""
    model = FusionModel(config.model_config())
    if features is None:
        features = [extract_meeting(m, model, config.label_overlap, cache_dir) for m in manifests]
    data = Dataset.concat([f.dataset() for f in features])
    if len(np.unique(data.labels)) < 2:
        raise DataError("training data contains a single class")
    model, history = train(model, data, config.train_config())
    return model, history


def score_meeting(model: FusionModel, feats: MeetingFeatures) -> ScoreTimeline:
    scores = {}
    for pid in feats.participants:
        scores[pid] = predict(model, Dataset(feats.inputs[pid], np.zeros(feats.n_clips, dtype=int)))
    labels = {pid: feats.labels[pid] for pid in feats.participants} if feats.labels else {}
    return ScoreTimeline(feats.meeting_id, feats.clip_starts, feats.clip_duration, scores, labels)


def run_detect(manifest: MeetingManifest, model: FusionModel, config: RunConfig | None = None,
               cache_dir=None) -> ScoreTimeline:
    """Score every participant clip by clip with the same parameters."""
    if config is not None:
        check_compatible(model, config)
    overlap = config.label_overlap if config is not None else 0.5
    return score_meeting(model, extract_meeting(manifest, model, overlap, cache_dir))


def turn_silence_means(scores: ScoreTimeline, reference: SpeakerTimeline, pid) -> tuple[float, float]:
    """Mean score over clips whose midpoint falls inside / outside ``pid``'s turns."""
    mids = np.asarray(scores.clip_starts) + scores.clip_duration / 2
    segs = reference.for_label(pid)
    inside = np.zeros(len(mids), dtype=bool)
    for s in segs:
        inside |= (mids >= s.start) & (mids < s.end)
    s = np.asarray(scores.scores[pid])
    if inside.all() or not inside.any():
        raise DataError(f"participant {pid} has no turn or no silence on the clip grid")
    return float(s[inside].mean()), float(s[~inside].mean())
