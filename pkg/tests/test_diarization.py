import numpy as np
import pytest
from hypothesis import given, strategies as st

from asdfusion import diarization as D
from asdfusion.audio import AudioSignal, mfcc
from asdfusion.errors import DataError
from asdfusion.metrics import der
from asdfusion.pipeline.synth import synth_audio, turn_schedule
from asdfusion.timeline import Segment, SpeakerTimeline


def block_key(size, block, width, rng=None, jitter=0):
    cum = np.full(size, 1e-6)
    cum[block * width:(block + 1) * width] = 1.0
    if rng is not None and jitter:
        cum[rng.integers(size, size=jitter)] += 0.5
    cum /= cum.sum()
    return D.BinaryKey(D.binarize(cum), cum)


# --- KBM -------------------------------------------------------------------------

def test_kbm_size_and_strict_window():
    x = np.random.default_rng(0).standard_normal((2100, 60))
    kbm = D.train_kbm(x, frame_shift=0.1)
    assert kbm.size == 320 and kbm.means.shape == (320, 60)
    assert np.all(kbm.variances > 0)
    assert (kbm.window_frames, kbm.hop_frames) == (5, 2)
    assert len(set(kbm.pool_index.tolist())) == 320


def test_kbm_picks_longest_window():
    x = np.random.default_rng(1).standard_normal((10500, 4))
    kbm = D.train_kbm(x, kbm_size=20, frame_shift=0.1)
    # 2 s windows (20 frames, hop 10) give 1049 windows >= 1024
    assert (kbm.window_frames, kbm.hop_frames) == (20, 10)


def test_kbm_short_audio_errors():
    two_sec = AudioSignal(np.random.default_rng(2).standard_normal(32000) * 0.1, 16000)
    with pytest.raises(DataError, match="insufficient audio"):
        D.train_kbm(mfcc(two_sec))
    with pytest.raises(DataError, match="insufficient audio"):
        D.train_kbm(mfcc(two_sec), relaxed=True)


def test_kbm_seed_is_nearest_global_mean():
    x = np.random.default_rng(3).standard_normal((700, 3))
    kbm = D.train_kbm(x, kbm_size=10, relaxed=True, frame_shift=0.1)
    starts = np.arange(700 - kbm.window_frames + 1)
    means = np.stack([x[s:s + kbm.window_frames].mean(0) for s in starts])
    assert kbm.pool_index[0] == np.argmin(((means - x.mean(0)) ** 2).sum(1))


def test_kbm_two_band_purity():
    sched = turn_schedule(2, 60.0, turn=5.0)
    sig = synth_audio(sched, 60.0, 2, seed=4)
    feats = mfcc(sig)
    kbm = D.train_kbm(feats, relaxed=True)
    times = feats.frame_times
    spk = np.full(len(times), -1)
    for a, b, s in sched:
        spk[(times >= a) & (times < b)] = s
    # speaker that each selected Gaussian was trained on (window majority)
    src = np.array([np.bincount(spk[p * kbm.hop_frames:p * kbm.hop_frames + kbm.window_frames] + 1,
                                minlength=3)[1:].argmax() for p in kbm.pool_index])
    assert set(src) == {0, 1}
    top1 = D.top_gaussians(feats, kbm, 1)[:, 0]
    ok = spk >= 0
    purity = np.mean(src[top1[ok]] == spk[ok])
    assert purity >= 0.9


def test_symmetric_kl_properties():
    rng = np.random.default_rng(5)
    mu, var = rng.standard_normal((4, 3)), rng.random((4, 3)) + 0.1
    k = D.symmetric_kl(mu, var, mu, var)
    np.testing.assert_allclose(np.diag(k), 0, atol=1e-12)
    np.testing.assert_allclose(k, k.T, atol=1e-12)
    # closed form for one pair
    a, b = 0, 1
    direct = 0.5 * np.sum(var[a] / var[b] + var[b] / var[a] - 2 + (mu[a] - mu[b]) ** 2 * (1 / var[a] + 1 / var[b]))
    assert abs(k[a, b] - direct) < 1e-10


# --- keys --------------------------------------------------------------------------

def test_binary_key_examples():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((800, 6))
    kbm = D.train_kbm(x, relaxed=True, frame_shift=0.1)
    key = D.binary_key(x[:50], kbm)
    assert key.bits.sum() == 64
    assert abs(key.cumulative.sum() - 1) < 1e-12
    one = D.binary_key(x[:1], kbm)
    nz = one.cumulative[one.cumulative > 0]
    assert len(nz) == 10 and np.allclose(nz, 0.1)
    dup = D.binary_key(np.vstack([x[:30], x[:30]]), kbm)
    single = D.binary_key(x[:30], kbm)
    assert np.array_equal(dup.bits, single.bits) and np.allclose(dup.cumulative, single.cumulative)
    with pytest.raises(DataError):
        D.binary_key(x[:0], kbm)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=400))
def test_binarize_popcount(values):
    bits = D.binarize(np.array(values))
    assert bits.sum() == int(np.ceil(0.2 * len(values) - 1e-9))


def test_binarize_ties_lower_index():
    assert D.binarize(np.ones(10)).tolist() == [True, True] + [False] * 8


def test_jaccard_examples():
    def key(bits):
        b = np.array(bits, dtype=bool)
        return D.BinaryKey(b, b / max(b.sum(), 1))
    a = key([1, 1, 0, 0])
    assert D.jaccard_distance(a, a) == 0.0
    assert D.jaccard_distance(a, key([0, 0, 1, 1])) == 1.0
    assert D.jaccard_distance(key([1, 1, 1, 0]), key([1, 0, 0, 1])) == 0.75
    with pytest.raises(ValueError):
        D.jaccard_distance(a, key([1, 0, 1]))


# --- clustering -----------------------------------------------------------------------

def test_ahc_identical_keys():
    k = block_key(50, 0, 10)
    sols = D.ahc_cluster([k, k])
    assert [s.n_clusters for s in sols] == [2, 1]
    assert sols[-1].merge_distance == 0.0


def test_ahc_three_groups_and_length():
    rng = np.random.default_rng(7)
    keys = [block_key(300, g, 60, rng, jitter=3) for g in range(3) for _ in range(4)]
    sols = D.ahc_cluster(keys)
    assert len(sols) == 12
    assert [s.n_clusters for s in sols] == list(range(12, 0, -1))
    three = next(s for s in sols if s.n_clusters == 3)
    truth = np.repeat([0, 1, 2], 4)
    assert all(len(set(three.assignment[truth == g])) == 1 for g in range(3))
    assert len(set(three.assignment)) == 3
    heights = [s.merge_distance for s in sols]
    assert all(b >= a for a, b in zip(heights, heights[1:]))
    assert D.elbow_select(sols).n_clusters == 3


def test_ahc_single_segment():
    sols = D.ahc_cluster([block_key(20, 0, 4)])
    assert len(sols) == 1 and sols[0].n_clusters == 1


def _sols(dists, counts):
    return [D.ClusteringSolution(c, np.zeros(1, dtype=int), d) for c, d in zip(counts, dists)]


def test_elbow_examples():
    assert D.elbow_select(_sols([10, 4, 3.5, 3.4], [4, 3, 2, 1])).n_clusters == 3
    assert D.elbow_select(_sols([4, 3, 2, 1], [4, 3, 2, 1])).n_clusters == 2
    assert D.elbow_select(_sols([5, 1], [2, 1])).n_clusters == 1


# --- speech detection and full pipeline ---------------------------------------------------

def test_energy_sad_and_subsegments():
    # silence stays under 30 % of the recording so the percentile threshold separates it
    sr = 16000
    rng = np.random.default_rng(8)
    x = 1e-5 * rng.standard_normal(int(5.6 * sr))
    for a, b in [(0.4, 2.4), (2.6, 4.4), (4.9, 5.2)]:  # 0.2 s gap merges, 0.3 s blip dropped
        x[int(a * sr):int(b * sr)] += 0.1 * rng.standard_normal(int(b * sr) - int(a * sr))
    regions = D.energy_sad(AudioSignal(x, sr))
    assert len(regions) == 1
    a, b = regions[0]
    assert abs(a - 0.4) < 0.03 and abs(b - 4.4) < 0.03
    assert D.subsegments([(0.0, 3.2)]) == [(0.0, 1.0), (1.0, 2.0), (2.0, 3.2)]
    assert D.subsegments([(0.0, 2.7)]) == [(0.0, 1.0), (1.0, 2.0), (2.0, 2.7)]


def test_diarize_silence_is_empty():
    tl = D.diarize(AudioSignal(np.zeros(16000 * 5), 16000))
    assert tl.segments == [] and tl.total_speech == 0


def test_diarize_three_speakers():
    sched = turn_schedule(3, 60.0, turn=3.0, gap=0.5)
    sig = synth_audio(sched, 60.0, 3, seed=0)
    tl = D.diarize(sig)
    again = D.diarize(sig)
    assert tl.segments == again.segments
    assert len(tl.labels) == 3
    for lab in tl.labels:
        segs = tl.for_label(lab)
        assert all(s.end <= t.start for s, t in zip(segs, segs[1:]))
    assert all(0 <= s.start < s.end <= sig.duration for s in tl.segments)
    ref = SpeakerTimeline([Segment(a, b, f"p{s}") for a, b, s in sched])
    assert der(ref, tl).confusion == 0.0


def test_diarize_max_speakers_caps_clusters():
    sched = turn_schedule(3, 45.0, turn=3.0, gap=0.5)
    tl = D.diarize(synth_audio(sched, 45.0, 3, seed=1), D.DiarizationConfig(max_speakers=2))
    assert 1 <= len(tl.labels) <= 2


# --- hot vectors ----------------------------------------------------------------------------

def test_hot_encode_examples():
    tl = SpeakerTimeline([(0.0, 1.0, "spk1"), (2.0, 3.0, "spk0")])
    hv = D.hot_encode(tl, [0.5, 1.5, 2.5], 8)
    assert hv.matrix.tolist()[0] == [0, 0, 1, 0, 0, 0, 0, 0]
    assert hv.matrix.tolist()[1] == [1, 0, 0, 0, 0, 0, 0, 0]
    assert hv.matrix.tolist()[2] == [0, 1, 0, 0, 0, 0, 0, 0]
    clip = D.hot_encode(tl, np.arange(16) / 25, 8)
    assert clip.matrix.shape == (16, 8)


def test_hot_encode_overlap_latest_start_wins():
    tl = SpeakerTimeline([(0.0, 2.0, "spk0"), (1.0, 1.5, "spk2")])
    assert np.argmax(D.hot_encode(tl, [0.5, 1.2, 1.7]).matrix, axis=1).tolist() == [1, 3, 1]


def test_hot_encode_errors():
    with pytest.raises(DataError):
        D.hot_encode(SpeakerTimeline([(0, 1, "spk7")]), [0.5], 8)
    with pytest.raises(DataError):
        D.hot_encode(SpeakerTimeline([]), [0.5, 0.5], 8)


@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0.05, 3), st.integers(0, 6)), max_size=8),
       st.floats(0, 5))
def test_hot_encode_rows_one_hot(items, t0):
    tl = SpeakerTimeline([Segment(a, a + d, f"spk{k}") for a, d, k in items])
    m = D.hot_encode(tl, t0 + np.arange(16) * 0.04, 8).matrix
    assert np.all(m.sum(axis=1) == 1) and set(np.unique(m)) <= {0.0, 1.0}
