"""K-fold cross-validation over meetings."""
from __future__ import annotations

import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..fusion import FusionModel
from ..metrics import macro_micro_auc
from .config import RunConfig
from .detect import score_meeting, train_on_meetings
from .features import extract_meeting

log = logging.getLogger(__name__)


@dataclass
class ResultRecord:
    folds: list                      # [{"fold", "meetings", "macro_auc", "micro_auc"}]
    macro_mean: float
    macro_std: float
    micro_mean: float
    micro_std: float
    config: dict
    timings: dict = field(default_factory=dict)

    @classmethod
    def from_folds(cls, folds, config: dict, timings=None) -> "ResultRecord":
        macro = [f["macro_auc"] for f in folds]
        micro = [f["micro_auc"] for f in folds]
        std = (lambda v: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0)
        return cls(folds, float(np.mean(macro)), std(macro), float(np.mean(micro)), std(micro),
                   config, timings or {})

    def to_dict(self, timings: bool = False):
        d = asdict(self)
        if not timings:
            d.pop("timings")
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ResultRecord":
        try:
            return cls(**json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"{path}: cannot read result record ({exc})") from exc


def assign_folds(meeting_ids, n_folds: int) -> list[list[str]]:
    """Order meetings by CRC-32 of their id, then deal them round-robin."""
    if len(set(meeting_ids)) != len(meeting_ids):
        raise DataError("meeting ids must be unique for cross-validation")
    if len(meeting_ids) < n_folds:
        raise ConfigError(f"{n_folds} folds need at least {n_folds} meetings, got {len(meeting_ids)}")
    order = sorted(meeting_ids, key=lambda m: (zlib.crc32(m.encode()), m))
    return [order[k::n_folds] for k in range(n_folds)]


def cross_validate(manifests, config: RunConfig, cache_dir=None) -> ResultRecord:
    by_id = {m.meeting_id: m for m in manifests}
    folds = assign_folds([m.meeting_id for m in manifests], config.folds)
    t0 = time.perf_counter()
    probe = FusionModel(config.model_config())  # stems are parameter free; any instance prepares inputs
    feats = {mid: extract_meeting(m, probe, config.label_overlap, cache_dir) for mid, m in by_id.items()}
    timings = {"extract_s": time.perf_counter() - t0, "folds_s": []}
    for f in feats.values():
        if f.labels is None:
            raise DataError(f"meeting {f.meeting_id} has no ground truth")

    out = []
    for k, held in enumerate(folds):
        test_labels = np.concatenate([feats[m].labels[p] for m in held for p in feats[m].participants])
        if len(np.unique(test_labels)) < 2:
            raise DataError(f"fold {k} ({', '.join(held)}) lacks both classes")
        t = time.perf_counter()
        rest = [feats[m] for m in sorted(by_id) if m not in held]
        model, _ = train_on_meetings(None, config, features=rest)
        per = {}
        for m in held:
            st = score_meeting(model, feats[m])
            for p in st.participants:
                per[f"{m}/{p}"] = (st.scores[p], st.labels[p])
        report = macro_micro_auc(per)
        out.append({"fold": k, "meetings": held, "macro_auc": report.macro_auc, "micro_auc": report.micro_auc})
        timings["folds_s"].append(time.perf_counter() - t)
        log.info("fold %d: macro %.4f micro %.4f", k, report.macro_auc, report.micro_auc)
    return ResultRecord.from_folds(out, config.to_dict(), timings)
