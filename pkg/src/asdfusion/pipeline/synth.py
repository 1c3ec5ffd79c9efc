"""Deterministic synthetic meetings.

Each participant speaks band-limited noise in its own frequency band and is
shown as a textured rectangle.  While speaking, the rectangle bobs
vertically at 2 px/frame. While silent it stays still apart from rare
one-frame blinks.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage, signal as sps

from ..audio import AudioSignal, write_wav
from ..errors import ConfigError
from ..timeline import Segment, SpeakerTimeline, write_rttm
from .config import MeetingManifest, Participant

BOB = (0, 2, 4, 2, 0, -2, -4, -2)
BLINK_RATE = 0.02
SPEECH_STD = 0.1
NOISE_STD = 1e-4


def speaker_band(index: int) -> tuple[float, float]:
    return 200.0 + 1000.0 * index, 900.0 + 1000.0 * index


def turn_schedule(participants: int, duration: float, turn: float = 2.0, gap: float = 0.0):
    """Round-robin turns of ``turn`` seconds separated by ``gap`` seconds of silence."""
    if turn <= 0 or gap < 0:
        raise ConfigError("turn must be positive and gap non-negative")
    out, t, k = [], 0.0, 0
    while t + turn <= duration + 1e-9:
        out.append((round(t, 6), round(t + turn, 6), k % participants))
        t += turn + gap
        k += 1
    return out


def validate_schedule(schedule, participants: int, duration: float):
    by_spk = {}
    for start, end, spk in schedule:
        if not 0 <= spk < participants:
            raise ConfigError(f"schedule names speaker {spk} but there are {participants} participants")
        if not 0 <= start < end <= duration + 1e-9:
            raise ConfigError(f"segment ({start}, {end}) lies outside [0, {duration}]")
        by_spk.setdefault(spk, []).append((start, end))
    for spk, segs in by_spk.items():
        segs.sort()
        for (a0, a1), (b0, _) in zip(segs, segs[1:]):
            if b0 < a1:
                raise ConfigError(f"speaker {spk} has overlapping segments starting at {a0} and {b0}")


def synth_audio(schedule, duration: float, participants: int, seed: int = 0,
                sample_rate: int = 16000, noise_std: float = NOISE_STD) -> AudioSignal:
    rng = np.random.default_rng([seed, 1])
    n = int(round(duration * sample_rate))
    x = noise_std * rng.standard_normal(n)
    filters = [sps.butter(4, speaker_band(i), btype="bandpass", fs=sample_rate, output="sos")
               for i in range(participants)]
    for start, end, spk in schedule:
        a, b = int(round(start * sample_rate)), int(round(end * sample_rate))
        seg = sps.sosfilt(filters[spk], rng.standard_normal(b - a))
        x[a:b] += SPEECH_STD * seg / max(np.std(seg), 1e-12)
    return AudioSignal(x, sample_rate)


def _texture(rng, h, w):
    t = ndimage.gaussian_filter(rng.random((h, w)), 2.0)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    return 0.2 + 0.7 * t


def render_frames(active: np.ndarray, rng, size: int = 224):
    """Frames for one participant given a per-frame speaking mask."""
    rh, rw = size * 3 // 7, size * 3 // 7
    tex = _texture(rng, rh, rw)
    y0, x0 = (size - rh) // 2, (size - rw) // 2
    blinks = rng.random(len(active)) < BLINK_RATE
    eye = slice(rh // 4, rh // 4 + max(2, rh // 12))
    frames = []
    for i, speaking in enumerate(active):
        img = np.full((size, size), 0.1)
        dy = BOB[i % len(BOB)] if speaking else 0
        face = tex.copy()
        if blinks[i] and not speaking:
            face[eye] *= 0.3
        img[y0 + dy:y0 + dy + rh, x0:x0 + rw] = face
        frames.append(np.round(img * 255).astype(np.uint8))
    return frames


@dataclass
class SynthResult:
    manifest: MeetingManifest
    reference: SpeakerTimeline
    manifest_path: Path


def synth_fixture(out_dir, participants: int = 4, duration: float = 60.0, turn: float = 2.0,
                  gap: float = 0.0, seed: int = 0, fps: float = 25.0, frame_size: int = 224,
                  schedule=None, meeting_id: str = "synth", sample_rate: int = 16000) -> SynthResult:
    """Write audio.wav, frames/<pid>/NNNNNN.pgm, reference.rttm and manifest.json."""
    if not 2 <= participants <= 7:
        raise ConfigError("participant count must be between 2 and 7")
    if duration < 10:
        raise ConfigError("duration must be at least 10 s")
    if schedule is None:
        schedule = turn_schedule(participants, duration, turn, gap)
    schedule = [(float(a), float(b), int(s)) for a, b, s in schedule]
    validate_schedule(schedule, participants, duration)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pids = [f"p{i}" for i in range(participants)]
    reference = SpeakerTimeline([Segment(a, b, pids[s]) for a, b, s in schedule])
    write_wav(out / "audio.wav", synth_audio(schedule, duration, participants, seed, sample_rate))
    write_rttm(out / "reference.rttm", reference, meeting_id)

    n_frames = int(round(duration * fps))
    times = np.arange(n_frames) / fps
    for i, pid in enumerate(pids):
        active = np.zeros(n_frames, dtype=bool)
        for a, b, s in schedule:
            if s == i:
                active |= (times >= a) & (times < b)
        fdir = out / "frames" / pid
        fdir.mkdir(parents=True, exist_ok=True)
        for k, img in enumerate(render_frames(active, np.random.default_rng([seed, 2, i]), frame_size)):
            Image.fromarray(img).save(fdir / f"{k:06d}.pgm")

    manifest = MeetingManifest(meeting_id, "audio.wav",
                               [Participant(pid, f"frames/{pid}") for pid in pids],
                               fps, "reference.rttm", root=str(out))
    manifest.save(out / "manifest.json")
    return SynthResult(manifest, reference, out / "manifest.json")
