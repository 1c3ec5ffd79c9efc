import numpy as np
import pytest
from PIL import Image
from scipy import ndimage

from asdfusion import video as V
from asdfusion.errors import DataError


def texture(shape, seed=0, sigma=3.0):
    t = ndimage.gaussian_filter(np.random.default_rng(seed).random(shape), sigma)
    return (t - t.min()) / (t.max() - t.min())


def shift(img, dx, dy):
    return ndimage.shift(img, (dy, dx), order=3, mode="nearest")


# --- ingestion -------------------------------------------------------------------

def test_list_frames_numeric_order(tmp_path):
    for k in (10, 2, 1):
        Image.fromarray(np.full((4, 4), k, dtype=np.uint8)).save(tmp_path / f"f{k}.png")
    (tmp_path / "notes.txt").write_text("x")
    assert [p.name for p in V.list_frames(tmp_path)] == ["f1.png", "f2.png", "f10.png"]
    with pytest.raises(DataError):
        V.list_frames(tmp_path / "missing")


def test_image_round_trip_and_gray(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (5, 6, 3)).astype(np.uint8)
    V.save_image(tmp_path / "a.png", img / 255.0)
    back = V.load_image(tmp_path / "a.png")
    np.testing.assert_allclose(back, img / 255.0, atol=1e-12)
    Image.fromarray(img[:, :, 0]).save(tmp_path / "g.pgm")
    g = V.load_image(tmp_path / "g.pgm")
    assert g.shape == (5, 6, 3) and np.allclose(g[..., 0], g[..., 2])
    np.testing.assert_allclose(V.to_gray(np.ones((2, 2, 3))), 1.0)
    (tmp_path / "bad.png").write_bytes(b"nope")
    with pytest.raises(DataError):
        V.load_image(tmp_path / "bad.png")


def test_read_boxes(tmp_path):
    (tmp_path / "b.csv").write_text("frame_idx,x,y,w,h\n0,1,2,30,40\n3,0,0,10.4,10\n")
    assert V.read_boxes(tmp_path / "b.csv") == {0: (1, 2, 30, 40), 3: (0, 0, 10, 10)}
    (tmp_path / "bad.csv").write_text("frame_idx,x,y,w,h\n0,a,2,3,4\n")
    with pytest.raises(DataError):
        V.read_boxes(tmp_path / "bad.csv")


# --- crop / resize ----------------------------------------------------------------

def test_crop_resize_identity_and_constant():
    img = np.random.default_rng(1).random((224, 224))
    np.testing.assert_allclose(V.crop_resize(img, (0, 0, 224, 224)), img, atol=1e-12)
    out = V.crop_resize(np.full((300, 500, 3), 0.3), (10, 20, 77, 133))
    assert out.shape == (224, 224, 3) and np.allclose(out, 0.3)


def test_crop_resize_checkerboard_mean():
    yy, xx = np.mgrid[:448, :448]
    board = ((yy // 8 + xx // 8) % 2).astype(float)
    out = V.crop_resize(board)
    assert out.shape == (224, 224)
    assert abs(out.mean() - board.mean()) <= 1e-3
    assert out.min() >= 0 and out.max() <= 1


def test_crop_resize_errors():
    f = np.zeros((50, 50))
    for box in [(0, 0, 0, 10), (0, 0, 10, -1), (45, 0, 10, 10), (-1, 0, 10, 10)]:
        with pytest.raises(DataError):
            V.crop_resize(f, box)


# --- clips ------------------------------------------------------------------------

def test_assemble_clips_examples():
    frames = [np.full((8, 8), k / 40) for k in range(40)]
    clips = V.assemble_clips(frames, fps=25, participant_id="p", size=8)
    assert len(clips) == 2
    assert [c.start_time for c in clips] == [0.0, 16 / 25]
    assert clips[0].tensor.shape == (3, 16, 8, 8) and clips[1].start_index == 16
    used = np.concatenate([c.tensor[0, :, 0, 0] for c in clips])
    np.testing.assert_allclose(used, np.arange(32) / 40)
    assert 16 / 25 == pytest.approx(0.64)
    with pytest.raises(DataError):
        V.assemble_clips(frames[:15])


def test_clips_from_paths_with_boxes(tmp_path):
    for k in range(16):
        Image.fromarray(np.full((40, 60), 10 * k, dtype=np.uint8)).save(tmp_path / f"{k:04d}.pgm")
    paths = V.list_frames(tmp_path)
    clip = next(V.iter_clips(paths, boxes={0: (5, 5, 20, 20)}))
    assert clip.tensor.shape == (3, 16, 224, 224)
    np.testing.assert_allclose(clip.tensor[:, 3], 30 / 255)


# --- optical flow ---------------------------------------------------------------

def test_flow_identical_and_flat_are_zero():
    img = texture((64, 64))
    assert not V.dense_flow(img, img).any()
    flat = np.full((64, 64), 0.4)
    assert not V.dense_flow(flat, flat + 0.0).any()


def test_flow_translation_two_pixels():
    prev = texture((96, 96), seed=2)
    nxt = shift(prev, 2, 0)
    f = V.dense_flow(prev, nxt)
    inner = (slice(12, -12), slice(12, -12))
    assert abs(np.median(f[0][inner]) - 2.0) <= 0.3
    assert abs(np.median(f[1][inner])) <= 0.3


def test_flow_brightness_offset_invariant():
    prev = texture((80, 80), seed=3) * 0.7
    nxt = shift(prev, 1, 1)
    a = np.hypot(*V.dense_flow(prev, nxt))
    b = np.hypot(*V.dense_flow(prev + 0.2, nxt + 0.2))
    assert abs(np.median(a) - np.median(b)) <= 1e-6


def test_flow_size_mismatch():
    with pytest.raises(DataError):
        V.dense_flow(np.zeros((10, 10)), np.zeros((10, 12)))


def test_flow_magnitude_clip():
    base = texture((224 + 80, 224 + 80), seed=4)
    frames = [shift(base, 3 * k, 4 * k)[40:264, 40:264] for k in range(16)]
    clip = V.FrameClip(np.stack(frames)[None].repeat(3, 0), 0.0)
    fc = V.flow_magnitude_clip(clip)
    assert fc.tensor.shape == (1, 16, 224, 224)
    assert not fc.tensor[0, 0].any() and np.all(fc.tensor >= 0)
    inner = fc.tensor[0, 1:, 30:-30, 30:-30]
    assert abs(np.median(inner) - 5.0) <= 0.5
    static = V.FrameClip(np.repeat(np.stack([frames[0]] * 16)[None], 3, 0), 0.0)
    assert not V.flow_magnitude_clip(static).tensor.any()
