"""Run configuration and meeting manifests."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError, DataError
from ..fusion import ModalitySpec, ModelConfig, TrainConfig

# user-facing modality names -> encoder kinds
MODALITY_KINDS = {"rgb": "rgb", "flow": "flow", "audionet": "spectrogram", "pybk": "hotvec"}
AUDIO_MODALITIES = ("audionet", "pybk")


def _default_sizes():
    return {"rgb": 128, "flow": 128, "audionet": 128, "pybk": 16}


@dataclass
class RunConfig:
    modalities: list = field(default_factory=lambda: ["rgb", "flow", "audionet"])
    embed_sizes: dict = field(default_factory=_default_sizes)
    fusion: str = "naive"
    attention_projection: bool = False
    head_hidden: int = 32
    hotvec_dim: int = 8
    batch_size: int = 20
    learning_rate: float = 0.05
    epochs: int = 21
    folds: int = 5
    label_overlap: float = 0.5
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.modalities, str):
            self.modalities = [m.strip() for m in self.modalities.split(",") if m.strip()]
        sizes = _default_sizes()
        sizes.update(self.embed_sizes or {})
        self.embed_sizes = {k: int(v) for k, v in sizes.items()}
        self.validate()

    def validate(self):
        unknown = [m for m in self.modalities if m not in MODALITY_KINDS]
        if unknown:
            raise ConfigError(f"unknown modalities {unknown}; choose from {sorted(MODALITY_KINDS)}")
        if not self.modalities:
            raise ConfigError("no modality selected")
        if sum(m in AUDIO_MODALITIES for m in self.modalities) > 1:
            raise ConfigError("audionet and pybk are alternatives; select at most one")
        if self.fusion not in ("naive", "attention"):
            raise ConfigError(f"fusion must be 'naive' or 'attention', not {self.fusion!r}")
        if self.folds < 2:
            raise ConfigError("cross-validation needs at least 2 folds")
        if not 0.0 < self.label_overlap <= 1.0:
            raise ConfigError("label_overlap must be in (0, 1]")
        self.train_config()

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.learning_rate, self.epochs, self.seed)

    def model_config(self) -> ModelConfig:
        specs = []
        for m in self.modalities:
            kind = MODALITY_KINDS[m]
            specs.append(ModalitySpec(m, kind, self.embed_sizes[m],
                                      input_dim=self.hotvec_dim if kind == "hotvec" else None))
        return ModelConfig(specs, self.fusion == "attention", self.attention_projection,
                           self.head_hidden, self.seed)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        data = {}
        if path:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"{path}: cannot read config ({exc})") from exc
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class Participant:
    id: str
    frames: str
    boxes: str | None = None


@dataclass
class MeetingManifest:
    meeting_id: str
    audio: str
    participants: list
    fps: float = 25.0
    rttm: str | None = None
    root: str = "."

    def __post_init__(self):
        self.participants = [p if isinstance(p, Participant) else Participant(**p) for p in self.participants]
        if not self.participants:
            raise DataError(f"meeting {self.meeting_id}: no participant streams")

    def resolve(self, rel) -> Path | None:
        if rel is None:
            return None
        p = Path(rel)
        return p if p.is_absolute() else Path(self.root) / p

    def check_paths(self):
        missing = [str(p) for p in [self.resolve(self.audio)] + [self.resolve(q.frames) for q in self.participants]
                   if not p.exists()]
        if self.rttm and not self.resolve(self.rttm).exists():
            missing.append(str(self.resolve(self.rttm)))
        if missing:
            raise DataError(f"meeting {self.meeting_id}: missing paths {missing}")

    def to_dict(self):
        d = asdict(self)
        d.pop("root")
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "MeetingManifest":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: cannot read manifest ({exc})") from exc
        try:
            m = cls(**data, root=str(path.parent))
        except TypeError as exc:
            raise DataError(f"{path}: malformed manifest ({exc})") from exc
        m.check_paths()
        return m
