"""Per-meeting feature extraction on the shared 16-frame / 0.64 s clip grid."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import audio as A
from .. import video as V
from ..diarization import DiarizationConfig, diarize, hot_encode
from ..errors import ConfigError, DataError
from ..fusion import Dataset, FusionModel
from ..timeline import SpeakerTimeline, read_rttm
from .config import MeetingManifest

log = logging.getLogger(__name__)

CACHE_VERSION = 1
AUDIO_FPS = V.CLIP_FRAMES / A.CLIP_DURATION  # 25 fps keeps both grids identical


@dataclass
class MeetingFeatures:
    meeting_id: str
    participants: list
    clip_starts: np.ndarray
    clip_duration: float
    inputs: dict                 # pid -> {modality: (n_clips, ...) prepared array}
    labels: dict | None = None   # pid -> (n_clips,) 0/1

    @property
    def n_clips(self) -> int:
        return len(self.clip_starts)

    def dataset(self, participants=None) -> Dataset:
        if self.labels is None:
            raise DataError(f"meeting {self.meeting_id} has no ground truth")
        pids = participants or self.participants
        parts = [Dataset(self.inputs[p], self.labels[p], np.array([f"{self.meeting_id}/{p}"] * self.n_clips,
                                                                  dtype=object)) for p in pids]
        return Dataset.concat(parts)


def clip_labels(reference: SpeakerTimeline, label, starts, duration: float, overlap: float = 0.5):
    """1 where ``label`` speaks for more than ``overlap`` of the clip (exact ties give 0)."""
    out = np.zeros(len(starts), dtype=int)
    segs = reference.for_label(label)
    for k, t0 in enumerate(starts):
        t1 = t0 + duration
        spoken = sum(max(0.0, min(t1, s.end) - max(t0, s.start)) for s in segs)
        out[k] = int(spoken > overlap * duration + 1e-9)
    return out


def _modalities(model: FusionModel):
    return [(m.name, m.kind, m.input_dim) for m in model.config.modalities]


def _cache_key(manifest: MeetingManifest, model: FusionModel) -> str:
    h = hashlib.sha256()
    h.update(json.dumps({"v": CACHE_VERSION, "manifest": manifest.to_dict(),
                         "modalities": [m.__dict__ for m in model.config.modalities]},
                        sort_keys=True, default=str).encode())
    files = [manifest.resolve(manifest.audio)]
    for p in manifest.participants:
        files += V.list_frames(manifest.resolve(p.frames))
        if p.boxes:
            files.append(manifest.resolve(p.boxes))
    for f in files:
        h.update(Path(f).read_bytes())
    return h.hexdigest()


def _check_alignment(manifest, frame_lists, signal):
    counts = {p.id: len(f) for p, f in zip(manifest.participants, frame_lists)}
    audio_frames = signal.duration * manifest.fps
    lo, hi = min(counts.values()), max(counts.values())
    if hi - lo > 1:
        raise DataError(f"meeting {manifest.meeting_id}: participant streams differ by {hi - lo} frames {counts}")
    if abs(audio_frames - lo) > 1 or abs(audio_frames - hi) > 1:
        raise DataError(f"meeting {manifest.meeting_id}: audio covers {audio_frames:.1f} frames "
                        f"but video has {counts}")


def extract_meeting(manifest: MeetingManifest, model: FusionModel, label_overlap: float = 0.5,
                    cache_dir=None, diarization: DiarizationConfig | None = None) -> MeetingFeatures:
    """Prepared encoder inputs for every participant and clip, plus clip labels if an RTTM is given."""
    mods = _modalities(model)
    kinds = {k for _, k, _ in mods}
    if kinds & {"spectrogram", "hotvec"} and abs(manifest.fps - AUDIO_FPS) > 1e-9:
        raise ConfigError(f"audio paths need {AUDIO_FPS:g} fps video so that clips align, got {manifest.fps}")
    if "vector" in kinds:
        raise ConfigError("vector modalities take precomputed embeddings, not meetings")

    signal = A.read_wav(manifest.resolve(manifest.audio))
    frame_lists = [V.list_frames(manifest.resolve(p.frames)) for p in manifest.participants]
    _check_alignment(manifest, frame_lists, signal)
    n_clips = min(min(len(f) for f in frame_lists) // V.CLIP_FRAMES,
                  int(len(signal.samples) // int(round(A.CLIP_DURATION * signal.sample_rate))))
    if n_clips < 1:
        raise DataError(f"meeting {manifest.meeting_id} is shorter than one clip")
    clip_dur = V.CLIP_FRAMES / manifest.fps
    starts = np.arange(n_clips) * clip_dur

    labels = None
    if manifest.rttm:
        ref = read_rttm(manifest.resolve(manifest.rttm))
        labels = {p.id: clip_labels(ref, p.id, starts, clip_dur, label_overlap) for p in manifest.participants}

    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"{_cache_key(manifest, model)}.npz"
        if cache_file.exists():
            with np.load(cache_file) as z:
                inputs = {p.id: {name: z[f"{p.id}|{name}"] for name, _, _ in mods} for p in manifest.participants}
            log.info("meeting %s: features loaded from %s", manifest.meeting_id, cache_file)
            return MeetingFeatures(manifest.meeting_id, [p.id for p in manifest.participants], starts,
                                   clip_dur, inputs, labels)

    shared = {}
    for name, kind, dim in mods:
        if kind == "spectrogram":
            clips = A.slice_audio_clips(signal)[:n_clips]
            shared[name] = np.stack([model.prepare(name, A.normalize_clip(A.spectrogram(c)).matrix)
                                     for c in clips])
        elif kind == "hotvec":
            # hot vectors reserve index 0 for silence, so at most dim - 1 speakers fit
            cfg = diarization or DiarizationConfig()
            if cfg.max_speakers is None or cfg.max_speakers > (dim or 8) - 1:
                cfg = replace(cfg, max_speakers=(dim or 8) - 1)
            timeline = diarize(signal, cfg)
            t = np.arange(n_clips * V.CLIP_FRAMES) / manifest.fps
            hv = hot_encode(timeline, t, dim or 8).matrix
            shared[name] = np.stack([model.prepare(name, hv[k * V.CLIP_FRAMES:(k + 1) * V.CLIP_FRAMES])
                                     for k in range(n_clips)])

    inputs = {}
    for p, frames in zip(manifest.participants, frame_lists):
        boxes = V.read_boxes(manifest.resolve(p.boxes)) if p.boxes else None
        per = {name: [] for name, kind, _ in mods if kind in ("rgb", "flow")}
        clips = V.iter_clips(frames[:n_clips * V.CLIP_FRAMES], manifest.fps, p.id, boxes)
        for clip in clips:
            for name, kind, _ in mods:
                if kind == "rgb":
                    per[name].append(model.prepare(name, clip.tensor))
                elif kind == "flow":
                    per[name].append(model.prepare(name, V.flow_magnitude_clip(clip).tensor))
        inputs[p.id] = {name: np.stack(per[name]) if name in per else shared[name] for name, _, _ in mods}
        log.info("meeting %s: participant %s extracted (%d clips)", manifest.meeting_id, p.id, n_clips)

    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        tmp = cache_file.with_suffix(".tmp.npz")
        np.savez(tmp, **{f"{pid}|{name}": arr for pid, d in inputs.items() for name, arr in d.items()})
        tmp.replace(cache_file)
    return MeetingFeatures(manifest.meeting_id, [p.id for p in manifest.participants], starts, clip_dur,
                           inputs, labels)
