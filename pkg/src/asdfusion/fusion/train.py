"""Mini-batch Adam training of a :class:`FusionModel`."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, NumericError
from ..numerics import AdamState, adam_step
from .model import FusionModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 20
    learning_rate: float = 0.05
    epochs: int = 21
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or not self.learning_rate > 0:
            raise ConfigError(f"invalid training configuration {self}")


@dataclass
class Dataset:
    """Prepared (stemmed) inputs per modality plus labels and participant ids."""
    inputs: dict
    labels: np.ndarray
    groups: np.ndarray = field(default=None)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        n = len(self.labels)
        if n == 0:
            raise DataError("empty dataset")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError("labels must be 0 or 1")
        for name, arr in self.inputs.items():
            if len(arr) != n:
                raise DataError(f"modality {name!r} has {len(arr)} samples, labels have {n}")
        if self.groups is None:
            self.groups = np.zeros(n, dtype=object)

    def __len__(self):
        return len(self.labels)

    def batch(self, idx):
        return {k: np.asarray(v[idx], dtype=np.float64) for k, v in self.inputs.items()}

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        keys = parts[0].inputs.keys()
        return Dataset({k: np.concatenate([p.inputs[k] for p in parts]) for k in keys},
                       np.concatenate([p.labels for p in parts]),
                       np.concatenate([p.groups for p in parts]))


def train(model: FusionModel, dataset: Dataset, config: TrainConfig | None = None):
    """Train in place for exactly ``config.epochs`` epochs.

    Returns the per-epoch mean training loss.  Shuffling uses a generator
    seeded from ``config.seed``, so a fixed seed reproduces the run exactly.
    """
    cfg = config or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(lr=cfg.learning_rate)
    params = model.params()
    model.zero_grad()
    history = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = model.loss_and_grad(dataset.batch(idx), dataset.labels[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}, batch starting {start}")
            adam_step(params, state)
            total += loss * len(idx)
        history.append(total / n)
        log.info("epoch %d/%d loss %.5f", epoch + 1, cfg.epochs, history[-1])
    return model, history


def predict(model: FusionModel, dataset: Dataset, batch_size: int = 64) -> np.ndarray:
    """Speaker probability for every sample."""
    out = []
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        out.append(model.predict_proba(dataset.batch(idx))[:, 1])
    return np.concatenate(out) if out else np.zeros(0)
