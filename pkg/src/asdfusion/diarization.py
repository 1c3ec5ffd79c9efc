"""Unsupervised binary-key speaker diarization and hot-vector encoding.

Pipeline: energy speech detection -> 1 s sub-segments -> MFCC -> KBM
(Gaussian pool + divergence-greedy selection) -> one binary key per
sub-segment -> k-medoids initialisation + agglomerative merging on Jaccard
distance -> elbow selection of the cluster count.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from .audio import AudioSignal, MfccSequence, mfcc
from .errors import DataError
from .timeline import Segment, SpeakerTimeline

log = logging.getLogger(__name__)

KBM_SIZE = 320
MIN_POOL = 1024
TOP_GAUSSIANS = 10
INIT_CLUSTERS = 12
BIT_FRACTION = 0.2


@dataclass
class Kbm:
    means: np.ndarray      # (size, dim)
    variances: np.ndarray  # (size, dim)
    pool_index: np.ndarray  # position of each selected Gaussian in the pool
    window_frames: int
    hop_frames: int

    @property
    def size(self) -> int:
        return self.means.shape[0]

    def log_likelihood(self, x: np.ndarray) -> np.ndarray:
        """Per-frame log-likelihood under every Gaussian, shape (frames, size)."""
        return _diag_loglik(np.atleast_2d(x), self.means, self.variances)


@dataclass
class BinaryKey:
    bits: np.ndarray        # bool, (size,)
    cumulative: np.ndarray  # float, (size,), sums to 1

    def __len__(self):
        return len(self.bits)


@dataclass
class ClusteringSolution:
    n_clusters: int
    assignment: np.ndarray
    within_distance: float
    merge_distance: float = 0.0
    raw_merge_distance: float = 0.0


@dataclass
class HotVectorSequence:
    matrix: np.ndarray
    frame_times: np.ndarray


@dataclass
class DiarizationConfig:
    kbm_size: int = KBM_SIZE
    min_pool: int = MIN_POOL
    min_window: float = 0.5
    max_window: float = 2.0
    top_gaussians: int = TOP_GAUSSIANS
    bit_fraction: float = BIT_FRACTION
    init_clusters: int = INIT_CLUSTERS
    subsegment: float = 1.0
    sad_percentile: float = 30.0
    sad_min_speech: float = 0.5
    sad_merge_gap: float = 0.3
    relaxed_pool: bool = True
    max_speakers: int | None = None   # elbow only considers solutions up to this size
    seed: int = 0


# ---------------------------------------------------------------------------
# Gaussian helpers
# ---------------------------------------------------------------------------

def _diag_loglik(x, means, variances):
    inv = 1.0 / variances
    quad = (x * x) @ inv.T - 2.0 * x @ (means * inv).T + np.sum(means * means * inv, axis=1)
    logdet = np.sum(np.log(2.0 * np.pi * variances), axis=1)
    return -0.5 * (quad + logdet)


def symmetric_kl(mu_a, var_a, mu_b, var_b) -> np.ndarray:
    """Symmetric KL divergence between diagonal Gaussians, all pairs (len(a) x len(b))."""
    mu_a, var_a, mu_b, var_b = (np.atleast_2d(v) for v in (mu_a, var_a, mu_b, var_b))
    ia, ib = 1.0 / var_a, 1.0 / var_b
    ratio = var_a @ ib.T + ia @ var_b.T
    # sum_d (ma - mb)^2 (ia + ib), expanded into matrix products
    cross = ((mu_a ** 2) * ia).sum(1)[:, None] + (mu_a ** 2) @ ib.T \
        + ia @ (mu_b ** 2).T + ((mu_b ** 2) * ib).sum(1)[None, :] \
        - 2.0 * (mu_a * ia) @ mu_b.T - 2.0 * mu_a @ (mu_b * ib).T
    d = mu_a.shape[1]
    return np.maximum(0.5 * (ratio + cross) - d, 0.0)


def _pool_geometry(n_frames, frame_shift, min_window, max_window, min_pool):
    w_min = max(1, int(math.ceil(min_window / frame_shift - 1e-9)))
    w_max = max(w_min, int(math.floor(max_window / frame_shift + 1e-9)))
    for w in range(w_max, w_min - 1, -1):
        hop = max(1, w // 2)
        count = (n_frames - w) // hop + 1 if n_frames >= w else 0
        if count >= min_pool:
            return w, hop, count
    return None


def train_kbm(features: MfccSequence | np.ndarray, kbm_size: int = KBM_SIZE, min_pool: int = MIN_POOL,
              min_window: float = 0.5, max_window: float = 2.0, relaxed: bool = False,
              frame_shift: float | None = None) -> Kbm:
    """Build the binary-key background model from a meeting's own features.

    The pool holds one diagonal Gaussian per sliding window.  The window is
    the longest in ``[min_window, max_window]`` that still yields
    ``min_pool`` windows at 50 % overlap.  With ``relaxed=True`` a recording
    too short for that falls back to the densest pool possible (shortest
    window, one-frame hop) as long as it still holds ``kbm_size`` Gaussians.

    Selection starts from the pool member nearest the global mean, then
    repeatedly adds the member whose smallest symmetric KL divergence to the
    already selected set is largest.
    """
    if isinstance(features, MfccSequence):
        frame_shift = features.frame_shift if frame_shift is None else frame_shift
        x = features.matrix
    else:
        x = np.asarray(features, dtype=np.float64)
        frame_shift = 0.1 if frame_shift is None else frame_shift
    n = x.shape[0]
    geom = _pool_geometry(n, frame_shift, min_window, max_window, min_pool)
    if geom is None:
        w_min = max(1, int(math.ceil(min_window / frame_shift - 1e-9)))
        hop = max(1, w_min // 2)
        need = ((min_pool - 1) * hop + w_min) * frame_shift
        if not relaxed:
            raise DataError(f"insufficient audio for the KBM: {n * frame_shift:.1f} s of features, "
                            f"need at least {need:.1f} s of speech for {min_pool} pool Gaussians")
        w, hop = w_min, 1
        count = n - w + 1
        if count < kbm_size:
            raise DataError(f"insufficient audio for the KBM: {n * frame_shift:.1f} s of features gives "
                            f"{max(count, 0)} pool Gaussians, fewer than the KBM size {kbm_size}")
        log.warning("KBM pool relaxed to %d Gaussians (window %d frames, hop 1)", count, w)
    else:
        w, hop, count = geom
    if count < kbm_size:
        raise DataError(f"pool of {count} Gaussians is smaller than the KBM size {kbm_size}")

    starts = np.arange(count) * hop
    idx = starts[:, None] + np.arange(w)[None, :]
    windows = x[idx]                       # (count, w, dim)
    means = windows.mean(axis=1)
    floor = 1e-2 * x.var(axis=0) + 1e-8
    variances = np.maximum(windows.var(axis=1), floor)

    seed = int(np.argmin(np.sum((means - x.mean(axis=0)) ** 2, axis=1)))
    selected = [seed]
    mind = symmetric_kl(means[seed], variances[seed], means, variances)[0]
    mind[seed] = -np.inf
    for _ in range(kbm_size - 1):
        j = int(np.argmax(mind))
        selected.append(j)
        mind = np.minimum(mind, symmetric_kl(means[j], variances[j], means, variances)[0])
        mind[selected] = -np.inf
    sel = np.array(selected)
    return Kbm(means[sel], variances[sel], sel, w, hop)


# ---------------------------------------------------------------------------
# binary keys
# ---------------------------------------------------------------------------

def binarize(cumulative: np.ndarray, bit_fraction: float = BIT_FRACTION) -> np.ndarray:
    """Set the top ``ceil(fraction * len)`` positions; ties go to the lower index."""
    k = int(math.ceil(bit_fraction * len(cumulative) - 1e-9))
    order = np.argsort(-cumulative, kind="stable")
    bits = np.zeros(len(cumulative), dtype=bool)
    bits[order[:k]] = True
    return bits


def top_gaussians(features, kbm: Kbm, top_g: int = TOP_GAUSSIANS) -> np.ndarray:
    """Indices of the ``top_g`` most likely KBM Gaussians for each frame."""
    x = features.matrix if isinstance(features, MfccSequence) else np.atleast_2d(features)
    ll = kbm.log_likelihood(x)
    return np.argsort(-ll, axis=1, kind="stable")[:, :top_g]


def key_from_topg(topg: np.ndarray, size: int, bit_fraction: float = BIT_FRACTION) -> BinaryKey:
    if topg.size == 0:
        raise DataError("binary key of an empty slice")
    counts = np.bincount(topg.ravel(), minlength=size).astype(np.float64)
    cumulative = counts / counts.sum()
    return BinaryKey(binarize(cumulative, bit_fraction), cumulative)


def binary_key(features, kbm: Kbm, top_g: int = TOP_GAUSSIANS, bit_fraction: float = BIT_FRACTION) -> BinaryKey:
    x = features.matrix if isinstance(features, MfccSequence) else np.asarray(features, dtype=np.float64)
    if x.size == 0 or x.shape[0] == 0:
        raise DataError("binary key of an empty slice")
    return key_from_topg(top_gaussians(x, kbm, top_g), kbm.size, bit_fraction)


def jaccard_distance(a: BinaryKey, b: BinaryKey) -> float:
    if len(a.bits) != len(b.bits):
        raise ValueError(f"binary keys differ in length ({len(a.bits)} vs {len(b.bits)})")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 0.0
    return 1.0 - np.count_nonzero(a.bits & b.bits) / union


def _jaccard_matrix(bits_a: np.ndarray, bits_b: np.ndarray) -> np.ndarray:
    a = bits_a.astype(np.float64)
    b = bits_b.astype(np.float64)
    inter = a @ b.T
    union = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        d = 1.0 - np.where(union > 0, inter / np.where(union > 0, union, 1.0), 1.0)
    return d


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------

def _canonical(assign: np.ndarray) -> np.ndarray:
    mapping = {}
    out = np.empty_like(assign)
    for i, a in enumerate(assign):
        out[i] = mapping.setdefault(int(a), len(mapping))
    return out


def _kmedoids(dist: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 20) -> np.ndarray:
    n = dist.shape[0]
    medoids = [int(rng.integers(n))]
    while len(medoids) < k:
        dmin = dist[:, medoids].min(axis=1)
        dmin[medoids] = -1.0
        medoids.append(int(np.argmax(dmin)))
    medoids = np.array(medoids)
    assign = None
    for _ in range(max_iter):
        new = np.argmin(dist[:, medoids], axis=1)
        new[medoids] = np.arange(k)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            members = np.flatnonzero(assign == c)
            cost = dist[np.ix_(members, members)].sum(axis=0)
            medoids[c] = members[int(np.argmin(cost))]
    return assign


def ahc_cluster(segment_keys: list[BinaryKey], init_clusters: int = INIT_CLUSTERS, seed: int = 0,
                bit_fraction: float = BIT_FRACTION, max_iter: int = 20) -> list[ClusteringSolution]:
    """Agglomerative clustering of segment binary keys.

    Returns one solution per cluster count, from ``min(init_clusters, n)``
    down to 1.  ``merge_distance`` is the running maximum of the Jaccard
    distances at which clusters were merged (cluster keys are rebuilt after
    every merge, so the raw sequence, kept in ``raw_merge_distance``, can dip).
    """
    n = len(segment_keys)
    if n < 2:
        return [ClusteringSolution(1, np.zeros(n, dtype=int), 0.0)]
    bits = np.stack([k.bits for k in segment_keys])
    cums = np.stack([k.cumulative for k in segment_keys])
    k0 = min(init_clusters, n)
    dist = _jaccard_matrix(bits, bits)
    assign = _kmedoids(dist, k0, np.random.default_rng(seed), max_iter)
    clusters = [list(np.flatnonzero(assign == c)) for c in range(k0)]

    def cluster_bits(members):
        pooled = cums[members].sum(axis=0)
        return binarize(pooled / pooled.sum(), bit_fraction)

    cbits = [cluster_bits(m) for m in clusters]

    def solution(merge_d, raw_d):
        lab = np.empty(n, dtype=int)
        within = 0.0
        for c, members in enumerate(clusters):
            lab[members] = c
            within += _jaccard_matrix(bits[members], cbits[c][None, :]).sum()
        return ClusteringSolution(len(clusters), _canonical(lab), within / n, merge_d, raw_d)

    solutions = [solution(0.0, 0.0)]
    height = 0.0
    while len(clusters) > 1:
        cd = _jaccard_matrix(np.stack(cbits), np.stack(cbits))
        np.fill_diagonal(cd, np.inf)
        flat = int(np.argmin(cd))
        i, j = divmod(flat, len(clusters))
        i, j = min(i, j), max(i, j)
        raw = float(cd[i, j])
        height = max(height, raw)
        clusters[i] = sorted(clusters[i] + clusters[j])
        del clusters[j]
        cbits[i] = cluster_bits(clusters[i])
        del cbits[j]
        solutions.append(solution(height, raw))
    return solutions


def elbow_select(solutions: list[ClusteringSolution]) -> ClusteringSolution:
    """Pick the cluster count where the within-distance curve bends most.

    The curve is ordered by decreasing cluster count; the chosen point
    maximises the discrete second difference.  Ties go to fewer clusters.
    """
    sols = sorted(solutions, key=lambda s: -s.n_clusters)
    if len(sols) < 3:
        return sols[-1]
    d = np.array([s.within_distance for s in sols])
    second = d[:-2] - 2.0 * d[1:-1] + d[2:]
    best = second.max()
    cand = np.flatnonzero(second >= best - 1e-12)
    return sols[int(cand[-1]) + 1]


# ---------------------------------------------------------------------------
# speech detection and the full pipeline
# ---------------------------------------------------------------------------

def energy_sad(signal: AudioSignal, percentile: float = 30.0, min_speech: float = 0.5,
               merge_gap: float = 0.3, frame: float = 0.025, hop: float = 0.010) -> list[tuple[float, float]]:
    """Speech regions where frame log-energy exceeds the meeting's percentile."""
    sr = signal.sample_rate
    win = int(round(frame * sr))
    step = int(round(hop * sr))
    x = signal.samples
    if len(x) < win:
        return []
    count = (len(x) - win) // step + 1
    idx = np.arange(win)[None, :] + step * np.arange(count)[:, None]
    energy = np.log(np.sum(x[idx] ** 2, axis=1) + 1e-12)
    thr = np.percentile(energy, percentile)
    mask = energy > thr
    centres = np.arange(count) * hop + frame / 2
    regions = []
    i = 0
    while i < count:
        if not mask[i]:
            i += 1
            continue
        j = i
        while j + 1 < count and mask[j + 1]:
            j += 1
        regions.append([max(0.0, centres[i] - hop / 2), min(signal.duration, centres[j] + hop / 2)])
        i = j + 1
    merged = []
    for r in regions:
        if merged and r[0] - merged[-1][1] <= merge_gap:
            merged[-1][1] = r[1]
        else:
            merged.append(r)
    return [(round(float(a), 6), round(float(b), 6)) for a, b in merged if b - a >= min_speech]


def subsegments(regions, length: float = 1.0) -> list[tuple[float, float]]:
    """Split speech regions into ``length`` pieces; a tail under half a piece joins its neighbour."""
    out = []
    for a, b in regions:
        edges = [a]
        t = a + length
        while t < b - 1e-9:
            edges.append(t)
            t += length
        edges.append(b)
        if len(edges) > 2 and edges[-1] - edges[-2] < length / 2:
            del edges[-2]
        out.extend(zip(edges[:-1], edges[1:]))
    return out


def diarize(signal: AudioSignal, config: DiarizationConfig | None = None) -> SpeakerTimeline:
    cfg = config or DiarizationConfig()
    regions = energy_sad(signal, cfg.sad_percentile, cfg.sad_min_speech, cfg.sad_merge_gap)
    if not regions:
        return SpeakerTimeline([])
    feats = mfcc(signal)
    centres = feats.frame_times
    pieces = []
    for a, b in subsegments(regions, cfg.subsegment):
        sel = np.flatnonzero((centres >= a) & (centres < b))
        if sel.size:
            pieces.append((a, b, sel))
    if not pieces:
        return SpeakerTimeline([])
    speech_idx = np.unique(np.concatenate([p[2] for p in pieces]))
    kbm = train_kbm(feats.matrix[speech_idx], cfg.kbm_size, cfg.min_pool, cfg.min_window,
                    cfg.max_window, relaxed=cfg.relaxed_pool, frame_shift=feats.frame_shift)
    topg = top_gaussians(feats.matrix, kbm, cfg.top_gaussians)
    keys = [key_from_topg(topg[sel], kbm.size, cfg.bit_fraction) for _, _, sel in pieces]
    if len(keys) >= 2:
        sols = ahc_cluster(keys, cfg.init_clusters, cfg.seed, cfg.bit_fraction)
        if cfg.max_speakers is not None:
            sols = [s for s in sols if s.n_clusters <= max(cfg.max_speakers, 1)]
        best = elbow_select(sols)
        assign = best.assignment
    else:
        assign = np.zeros(len(keys), dtype=int)
    assign = _canonical(assign)  # pieces are time ordered: labels by first appearance
    segs = [Segment(float(a), float(b), f"spk{c}") for (a, b, _), c in zip(pieces, assign)]
    return SpeakerTimeline(segs).merged(gap=0.0)


# ---------------------------------------------------------------------------
# hot vectors
# ---------------------------------------------------------------------------

_SPK = re.compile(r"^spk(\d+)$")


def hot_encode(timeline: SpeakerTimeline, frame_times, dim: int = 8,
               label_index: dict | None = None) -> HotVectorSequence:
    """One-hot rows per timestamp; index 0 is silence, ``spkK`` is index K+1.

    Labels not of the ``spkK`` form are numbered by first appearance unless
    ``label_index`` (label -> index >= 1) is supplied.  When segments overlap
    the one that started latest wins.
    """
    t = np.asarray(frame_times, dtype=np.float64)
    if t.ndim != 1 or t.size == 0 or np.any(np.diff(t) <= 0):
        raise DataError("frame_times must be a non-empty strictly increasing sequence")
    if label_index is None:
        label_index = {}
        nxt = 1
        for lab in timeline.labels:
            m = _SPK.match(lab)
            if m:
                label_index[lab] = int(m.group(1)) + 1
        for lab in timeline.labels:
            if lab not in label_index:
                while nxt in label_index.values():
                    nxt += 1
                label_index[lab] = nxt
    for lab in timeline.labels:
        if label_index.get(lab, dim) >= dim:
            raise DataError(f"label {lab!r} needs index {label_index.get(lab)} but dim is {dim}")
    out = np.zeros((t.size, dim))
    for r, ti in enumerate(t):
        active = timeline.active_labels(ti)
        if active:
            seg = max(active, key=lambda s: (s.start, s.end))
            out[r, label_index[seg.label]] = 1.0
        else:
            out[r, 0] = 1.0
    return HotVectorSequence(out, t)
