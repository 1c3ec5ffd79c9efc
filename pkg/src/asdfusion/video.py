"""Face-crop frame ingestion, 16-frame clip assembly and optical-flow magnitude."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from . import kernels
from .errors import DataError

CLIP_FRAMES = 16
FRAME_SIZE = 224
DEFAULT_FPS = 25.0
LUMA = np.array([0.299, 0.587, 0.114])

FLOW_LEVELS = 3
FLOW_WINDOW = 5
FLOW_ITERS = 3
FLOW_DET_MIN = 1e-9

_IMAGE_EXT = {".png", ".pgm", ".ppm"}
_BLUR = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass
class FrameClip:
    tensor: np.ndarray  # (3, 16, 224, 224), values in [0, 1]
    start_time: float
    participant_id: str | None = None
    start_index: int = 0


@dataclass
class FlowClip:
    tensor: np.ndarray  # (1, 16, 224, 224), magnitudes in px/frame
    start_time: float
    participant_id: str | None = None


# ---------------------------------------------------------------------------
# image I/O
# ---------------------------------------------------------------------------

def list_frames(directory) -> list[Path]:
    """Numbered image files in ``directory``, ordered by their frame number."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a frame directory")
    files = []
    for p in directory.iterdir():
        if p.suffix.lower() in _IMAGE_EXT:
            m = re.search(r"(\d+)", p.stem)
            if m:
                files.append((int(m.group(1)), p))
    files.sort()
    return [p for _, p in files]


def load_image(path) -> np.ndarray:
    """Read an 8-bit image as float RGB in [0, 1], shape (H, W, 3)."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except OSError as exc:
        raise DataError(f"{path}: unreadable image ({exc})") from exc
    return arr


def save_image(path, img: np.ndarray):
    arr = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_boxes(path) -> dict[int, tuple[int, int, int, int]]:
    """Bounding-box CSV with header ``frame_idx,x,y,w,h``."""
    boxes = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                boxes[int(row["frame_idx"])] = tuple(int(round(float(row[k]))) for k in ("x", "y", "w", "h"))
            except (KeyError, ValueError) as exc:
                raise DataError(f"{path}: malformed bounding-box row {row}") from exc
    return boxes


def to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img @ LUMA
    return img


# ---------------------------------------------------------------------------
# resizing
# ---------------------------------------------------------------------------

def _axis_weights(n_in, n_out):
    # half-pixel centres: an n -> n resize is the identity, 2n -> n averages pairs
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1.0)
    i0 = np.minimum(np.floor(pos).astype(np.int64), max(n_in - 2, 0))
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = pos - i0
    return i0, i1, f


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    y0, y1, fy = _axis_weights(img.shape[0], out_h)
    x0, x1, fx = _axis_weights(img.shape[1], out_w)
    shape = (-1, 1) + (1,) * (img.ndim - 2)
    rows = img[y0] * (1.0 - fy).reshape(shape) + img[y1] * fy.reshape(shape)
    shape = (1, -1) + (1,) * (img.ndim - 2)
    return rows[:, x0] * (1.0 - fx).reshape(shape) + rows[:, x1] * fx.reshape(shape)


def crop_resize(frame: np.ndarray, box=None, size: int = FRAME_SIZE) -> np.ndarray:
    """Crop ``box = (x, y, w, h)`` (whole frame when None) and resize to size x size."""
    frame = np.asarray(frame, dtype=np.float64)
    H, W = frame.shape[:2]
    if box is None:
        box = (0, 0, W, H)
    x, y, w, h = (int(v) for v in box)
    if w <= 0 or h <= 0:
        raise DataError(f"degenerate bounding box {box}")
    if x < 0 or y < 0 or x + w > W or y + h > H:
        raise DataError(f"bounding box {box} outside the {W}x{H} frame")
    out = resize_bilinear(frame[y:y + h, x:x + w], size, size)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# clips
# ---------------------------------------------------------------------------

def clip_starts(n_frames: int, clip_frames: int = CLIP_FRAMES) -> list[int]:
    if n_frames < clip_frames:
        raise DataError(f"need at least {clip_frames} frames, got {n_frames}")
    return list(range(0, (n_frames // clip_frames) * clip_frames, clip_frames))


def iter_clips(frames: Sequence, fps: float = DEFAULT_FPS, participant_id=None, boxes=None,
               size: int = FRAME_SIZE, clip_frames: int = CLIP_FRAMES) -> Iterator[FrameClip]:
    """Lazily yield clips; ``frames`` may hold arrays or image paths."""
    boxes = boxes or {}
    for s in clip_starts(len(frames), clip_frames):
        tensor = np.empty((3, clip_frames, size, size))  # (C, T, H, W)
        for k, i in enumerate(range(s, s + clip_frames)):
            f = frames[i]
            if not isinstance(f, np.ndarray):
                f = load_image(f)
            plane = crop_resize(f, boxes.get(i), size)
            tensor[:, k] = plane if plane.ndim == 2 else np.moveaxis(plane, 2, 0)
        yield FrameClip(tensor, s / fps, participant_id, s)


def assemble_clips(frames: Sequence, fps: float = DEFAULT_FPS, participant_id=None, boxes=None,
                   size: int = FRAME_SIZE, clip_frames: int = CLIP_FRAMES) -> list[FrameClip]:
    """Group frames into consecutive disjoint 16-frame clips; the remainder is dropped."""
    return list(iter_clips(frames, fps, participant_id, boxes, size, clip_frames))


# ---------------------------------------------------------------------------
# optical flow
# ---------------------------------------------------------------------------

def _downsample(img):
    blurred = ndimage.convolve1d(ndimage.convolve1d(img, _BLUR, axis=0, mode="nearest"), _BLUR, axis=1, mode="nearest")
    return blurred[::2, ::2]


def dense_flow(prev: np.ndarray, nxt: np.ndarray, levels: int = FLOW_LEVELS, window: int = FLOW_WINDOW,
               iters: int = FLOW_ITERS, det_min: float = FLOW_DET_MIN) -> np.ndarray:
    """Coarse-to-fine iterative Lucas-Kanade flow from ``prev`` to ``nxt``.

    Returns a (2, H, W) array holding (u, v) = (dx, dy) in pixels per frame.
    Pixels whose structure tensor determinant is below ``det_min`` get no
    update at that level.
    """
    prev = to_gray(prev)
    nxt = to_gray(nxt)
    if prev.shape != nxt.shape:
        raise DataError(f"frame sizes differ: {prev.shape} vs {nxt.shape}")
    pyr = [(prev, nxt)]
    for _ in range(levels - 1):
        a, b = pyr[-1]
        if min(a.shape) < 2 * window:
            break
        pyr.append((_downsample(a), _downsample(b)))
    half = window // 2
    u = v = None
    for a, b in reversed(pyr):
        if u is None:
            u = np.zeros(a.shape)
            v = np.zeros(a.shape)
        else:
            sy = a.shape[0] / u.shape[0]
            sx = a.shape[1] / u.shape[1]
            u = resize_bilinear(u, *a.shape) * sx
            v = resize_bilinear(v, *a.shape) * sy
        iy, ix = np.gradient(a)
        u, v = kernels.lk_iterate(a, b, ix, iy, u, v, half, iters, det_min)
    return np.stack([u, v])


def flow_magnitude_clip(frame_clip: FrameClip, **flow_kwargs) -> FlowClip:
    """Per-frame flow magnitude; plane 0 is zero (no predecessor)."""
    t = frame_clip.tensor
    gray = np.tensordot(LUMA, t, axes=([0], [0])) if t.shape[0] == 3 else t[0]
    out = np.zeros((1,) + gray.shape)
    for k in range(1, gray.shape[0]):
        f = dense_flow(gray[k - 1], gray[k], **flow_kwargs)
        out[0, k] = np.hypot(f[0], f[1])
    return FlowClip(out, frame_clip.start_time, frame_clip.participant_id)
