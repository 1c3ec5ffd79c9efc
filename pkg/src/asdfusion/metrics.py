"""ROC / AUC (macro and micro) and diarization error rate."""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError
from .timeline import SpeakerTimeline

log = logging.getLogger(__name__)

EXHAUSTIVE_MAX_LABELS = 8

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass
class AucReport:
    per_participant: dict
    macro_auc: float
    micro_auc: float
    counts: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


@dataclass
class DerBreakdown:
    missed: float
    false_alarm: float
    confusion: float
    total_ref_speech: float

    @property
    def missed_rate(self):
        return self.missed / self.total_ref_speech

    @property
    def false_alarm_rate(self):
        return self.false_alarm / self.total_ref_speech

    @property
    def confusion_rate(self):
        return self.confusion / self.total_ref_speech

    @property
    def der(self):
        return (self.missed + self.false_alarm + self.confusion) / self.total_ref_speech

    def to_dict(self):
        return {"missed": self.missed_rate, "false_alarm": self.false_alarm_rate,
                "confusion": self.confusion_rate, "der": self.der,
                "missed_seconds": self.missed, "false_alarm_seconds": self.false_alarm,
                "confusion_seconds": self.confusion, "total_ref_speech": self.total_ref_speech}


def der_from_rates(missed: float, false_alarm: float, confusion: float) -> float:
    """Compose component rates (fractions of reference speech) into DER."""
    return missed + false_alarm + confusion


# ---------------------------------------------------------------------------
# ROC / AUC
# ---------------------------------------------------------------------------

def roc_curve(scores, labels) -> RocCurve:
    """Sweep thresholds over the distinct scores (descending), ties entering together."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise DataError("scores and labels differ in length")
    pos = int(np.sum(y == 1))
    neg = int(np.sum(y == 0))
    if pos == 0 or neg == 0:
        raise DataError("ROC needs at least one positive and one negative sample")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y == 1)[last]
    fp = np.cumsum(y == 0)[last]
    tpr = np.r_[0.0, tp / pos]
    fpr = np.r_[0.0, fp / neg]
    thr = np.r_[np.inf, s[last]]
    return RocCurve(fpr, tpr, thr)


def auc(curve: RocCurve) -> float:
    return float(_trapezoid(curve.tpr, curve.fpr))


def roc_auc(scores, labels) -> float:
    return auc(roc_curve(scores, labels))


def macro_micro_auc(per_participant: dict) -> AucReport:
    """Macro = unweighted mean of per-participant AUCs; micro = AUC of the pooled samples.

    Participants whose labels are all one class are left out of the macro
    average (and listed in ``excluded``) but still enter the pooled set.
    """
    if not per_participant:
        raise DataError("no participants to evaluate")
    per, counts, excluded = {}, {}, []
    all_s, all_y = [], []
    for pid, (scores, labels) in per_participant.items():
        scores = np.asarray(scores, dtype=np.float64)
        labels = np.asarray(labels).astype(int)
        counts[pid] = int(len(labels))
        all_s.append(scores)
        all_y.append(labels)
        if labels.min(initial=0) == labels.max(initial=0) or len(labels) == 0:
            log.warning("participant %s has a single class; excluded from macro AUC", pid)
            excluded.append(pid)
            continue
        per[pid] = roc_auc(scores, labels)
    if not per:
        raise DataError("no participant has both classes")
    micro = roc_auc(np.concatenate(all_s), np.concatenate(all_y))
    return AucReport(per, float(np.mean(list(per.values()))), micro, counts, excluded)


# ---------------------------------------------------------------------------
# DER
# ---------------------------------------------------------------------------

def _atomic_intervals(reference: SpeakerTimeline, hypothesis: SpeakerTimeline, extra=()):
    bounds = {0.0} | {t for t in extra if t > 0}
    for s in reference.segments + hypothesis.segments:
        bounds.add(s.start)
        bounds.add(s.end)
    b = np.array(sorted(bounds))
    return b[:-1], b[1:]


def _activity(timeline, labels, starts, ends):
    mids = (starts + ends) / 2
    act = np.zeros((len(labels), len(starts)), dtype=bool)
    index = {lab: i for i, lab in enumerate(labels)}
    for s in timeline.segments:
        act[index[s.label]] |= (mids >= s.start) & (mids < s.end)
    return act


def overlap_matrix(reference: SpeakerTimeline, hypothesis: SpeakerTimeline):
    """Seconds of co-activity between every reference and hypothesis label."""
    starts, ends = _atomic_intervals(reference, hypothesis)
    rl, hl = reference.labels, hypothesis.labels
    ra = _activity(reference, rl, starts, ends).astype(np.float64)
    ha = _activity(hypothesis, hl, starts, ends).astype(np.float64)
    return (ra * (ends - starts)) @ ha.T, rl, hl


def _mapping_exhaustive(m: np.ndarray):
    nr, nh = m.shape
    n = max(nr, nh)
    sq = np.zeros((n, n))
    sq[:nr, :nh] = m
    perms = np.array(list(itertools.permutations(range(n))))
    totals = sq[np.arange(n)[None, :], perms].sum(axis=1)
    best_perm = perms[int(np.argmax(totals))]
    return [(r, int(h)) for r, h in enumerate(best_perm) if r < nr and h < nh]


def _mapping_hungarian(m: np.ndarray):
    r, h = linear_sum_assignment(m, maximize=True)
    return list(zip(r.tolist(), h.tolist()))


def optimal_speaker_mapping(reference: SpeakerTimeline, hypothesis: SpeakerTimeline,
                            method: str = "auto") -> dict:
    """One-to-one reference -> hypothesis label pairing maximising overlapped time.

    ``method`` is "exhaustive", "hungarian" or "auto" (exhaustive while both
    sides have at most eight labels).
    """
    m, rl, hl = overlap_matrix(reference, hypothesis)
    if not rl or not hl:
        return {}
    if method == "auto":
        method = "exhaustive" if max(len(rl), len(hl)) <= EXHAUSTIVE_MAX_LABELS else "hungarian"
    pairs = _mapping_exhaustive(m) if method == "exhaustive" else _mapping_hungarian(m)
    return {rl[r]: hl[h] for r, h in pairs}


def _collar_mask(reference: SpeakerTimeline, starts, ends, collar):
    keep = np.ones(len(starts), dtype=bool)
    if collar <= 0:
        return keep
    mids = (starts + ends) / 2
    for s in reference.segments:
        for t in (s.start, s.end):
            keep &= ~((mids > t - collar) & (mids < t + collar))
    return keep


def der(reference: SpeakerTimeline, hypothesis: SpeakerTimeline, collar: float = 0.0,
        mapping: dict | None = None) -> DerBreakdown:
    """Missed speech, false alarm and speaker confusion after optimal label mapping.

    Overlapping reference speakers each count towards the totals.  With a
    positive ``collar`` the regions within +-collar of every reference
    boundary are not scored.
    """
    extra = [t + d for seg in reference.segments for t in (seg.start, seg.end) for d in (-collar, collar)] \
        if collar > 0 else ()
    starts, ends = _atomic_intervals(reference, hypothesis, extra)
    rl, hl = reference.labels, hypothesis.labels
    ra = _activity(reference, rl, starts, ends)
    ha = _activity(hypothesis, hl, starts, ends)
    keep = _collar_mask(reference, starts, ends, collar)
    dur = (ends - starts) * keep
    nref = ra.sum(axis=0)
    nhyp = ha.sum(axis=0)
    total = float(np.sum(dur * nref))
    if total <= 0:
        raise DataError("reference contains no scored speech")
    if mapping is None:
        mapping = optimal_speaker_mapping(reference, hypothesis)
    correct = np.zeros(len(starts))
    for r_lab, h_lab in mapping.items():
        correct += ra[rl.index(r_lab)] & ha[hl.index(h_lab)]
    missed = float(np.sum(dur * np.maximum(nref - nhyp, 0)))
    fa = float(np.sum(dur * np.maximum(nhyp - nref, 0)))
    conf = float(np.sum(dur * (np.minimum(nref, nhyp) - correct)))
    return DerBreakdown(missed, fa, conf, total)
