"""WAV ingestion, 0.64 s spectrogram clips and MFCC extraction.

Also holds the binary feature-dump format shared with the video side::

    offset  size  field
    0       4     magic b"ASDF"
    4       2     version (u16, currently 1)
    6       2     reserved (u16, zero)
    8       4     rows (u32)
    12      4     cols (u32)
    16      ...   rows*cols float64, little endian, row major
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct
from scipy.io import wavfile

from .errors import DataError

DEFAULT_SAMPLE_RATE = 16000
CLIP_DURATION = 0.64

SPEC_WIN = 0.025
SPEC_HOP = 0.010
SPEC_NFFT = 512
SPEC_BINS = 256

MFCC_WIN = 0.250
MFCC_HOP = 0.100
MFCC_FILTERS = 60
MFCC_COEFFS = 60
PRE_EMPHASIS = 0.97
LOG_FLOOR = 1e-20

DUMP_MAGIC = b"ASDF"
DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sHHII")


@dataclass
class AudioSignal:
    samples: np.ndarray
    sample_rate: int
    start_time: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError("AudioSignal must be mono")
        if self.sample_rate <= 0:
            raise DataError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class SpectrogramClip:
    matrix: np.ndarray  # frames x 256
    start_time: float = 0.0
    normalized: bool = False


@dataclass
class MfccSequence:
    matrix: np.ndarray  # frames x 60
    frame_shift: float = MFCC_HOP
    frame_length: float = MFCC_WIN
    start_time: float = 0.0

    @property
    def frame_times(self) -> np.ndarray:
        """Centre time of every frame."""
        n = self.matrix.shape[0]
        return self.start_time + np.arange(n) * self.frame_shift + self.frame_length / 2


def read_wav(path) -> AudioSignal:
    """Read a 16-bit PCM or 32-bit float WAV as a mono signal in [-1, 1]."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, wavfile.WavFileWarning, struct.error, EOFError) as exc:
        raise DataError(f"{path}: unreadable WAV ({exc})") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioSignal(np.clip(x, -1.0, 1.0), int(rate))


def write_wav(path, signal: AudioSignal, pcm16: bool = True):
    x = np.clip(signal.samples, -1.0, 1.0)
    if pcm16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = x.astype(np.float32)
    wavfile.write(path, signal.sample_rate, data)


def slice_audio_clips(signal: AudioSignal, clip_duration: float = CLIP_DURATION) -> list[AudioSignal]:
    """Cut consecutive, non-overlapping clips; the short tail is dropped."""
    n = int(round(clip_duration * signal.sample_rate))
    count = len(signal.samples) // n
    if count == 0:
        raise DataError(f"signal of {signal.duration:.3f} s is shorter than one {clip_duration} s clip")
    return [AudioSignal(signal.samples[k * n:(k + 1) * n], signal.sample_rate,
                        signal.start_time + k * n / signal.sample_rate)
            for k in range(count)]


def _frames(x, win, hop):
    count = (len(x) - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(count)[:, None]
    return x[idx]


def spectrogram(clip: AudioSignal) -> SpectrogramClip:
    """Magnitude STFT: 25 ms Hamming window, 10 ms hop, 512-point FFT, bins 1..256."""
    sr = clip.sample_rate
    win = int(round(SPEC_WIN * sr))
    hop = int(round(SPEC_HOP * sr))
    if len(clip.samples) < win:
        raise DataError("clip shorter than one analysis window")
    nfft = max(SPEC_NFFT, int(2 ** np.ceil(np.log2(win))))
    frames = _frames(clip.samples, win, hop) * np.hamming(win)
    mag = np.abs(np.fft.rfft(frames, n=nfft, axis=1))
    return SpectrogramClip(mag[:, 1:SPEC_BINS + 1], clip.start_time, False)


def normalize_clip(spec: SpectrogramClip) -> SpectrogramClip:
    """Subtract the global mean and divide by the global std (zeros if flat)."""
    m = spec.matrix
    mu = m.mean()
    sd = m.std()
    if sd < 1e-12:
        out = np.zeros_like(m)
    else:
        out = (m - mu) / sd
    return SpectrogramClip(out, spec.start_time, True)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, nfft: int, sample_rate: int, fmin: float = 0.0, fmax: float | None = None):
    """Triangular, area-normalised filters over the rfft bins (n_filters x nfft//2+1)."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs[None, :] - lo) / (mid - lo)
    fall = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rise, fall))
    fb *= (2.0 / (hi - lo))
    return fb


def _mfcc_frames(signal: AudioSignal):
    sr = signal.sample_rate
    win = int(round(MFCC_WIN * sr))
    hop = int(round(MFCC_HOP * sr))
    if len(signal.samples) < win:
        raise DataError(f"MFCC needs at least {MFCC_WIN} s of audio, got {signal.duration:.3f} s")
    x = signal.samples
    emph = np.append(x[0], x[1:] - PRE_EMPHASIS * x[:-1])
    return _frames(emph, win, hop) * np.hamming(win)


def log_mel(signal: AudioSignal) -> np.ndarray:
    """Log mel-filterbank energies (frames x 60) of the MFCC front end."""
    frames = _mfcc_frames(signal)
    nfft = int(2 ** np.ceil(np.log2(frames.shape[1])))
    power = np.abs(np.fft.rfft(frames, n=nfft, axis=1)) ** 2 / nfft
    fb = mel_filterbank(MFCC_FILTERS, nfft, signal.sample_rate)
    return np.log(np.maximum(power @ fb.T, LOG_FLOOR))


def mfcc(signal: AudioSignal) -> MfccSequence:
    """60 static MFCCs from 250 ms windows with a 100 ms shift."""
    coeffs = dct(log_mel(signal), type=2, norm="ortho", axis=1)[:, :MFCC_COEFFS]
    return MfccSequence(coeffs, MFCC_HOP, MFCC_WIN, signal.start_time)


# ---------------------------------------------------------------------------
# feature dump / CSV
# ---------------------------------------------------------------------------

def save_features(path, matrix):
    matrix = np.asarray(matrix, dtype="<f8")
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.ndim != 2:
        matrix = matrix.reshape(matrix.shape[0], -1)
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, 0, rows, cols))
        fh.write(np.ascontiguousarray(matrix).tobytes())


def load_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise DataError(f"{path}: truncated feature header")
    magic, version, _, rows, cols = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != DUMP_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    body = raw[_DUMP_HEADER.size:]
    if len(body) != rows * cols * 8:
        raise DataError(f"{path}: expected {rows * cols * 8} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)


def save_features_csv(path, matrix):
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")
