"""Fusion model: per-modality encoders -> (attention) -> concatenation -> dense head."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from ..numerics import Parameter, softmax, softmax_cross_entropy
from .encoders import HotVectorEncoder, SpectrogramEncoder, VectorInput, VideoEncoder
from .layers import Attention, Dense, Sequential, Tanh, attention_apply

EMBED_SIZES = (16, 32, 64, 128)
AUDIO_KINDS = ("spectrogram", "hotvec")
KINDS = ("rgb", "flow") + AUDIO_KINDS + ("vector",)


@dataclass
class ModalitySpec:
    name: str
    kind: str
    size: int
    input_dim: int | None = None      # hotvec dim or vector length
    input_shape: list | None = None   # override the encoder's expected clip shape
    stem: list | None = None


@dataclass
class ModelConfig:
    modalities: list = field(default_factory=list)
    attention: bool = False
    attention_projection: bool = False
    head_hidden: int = 32
    seed: int = 0

    def __post_init__(self):
        self.modalities = [m if isinstance(m, ModalitySpec) else ModalitySpec(**m) for m in self.modalities]
        if not self.modalities:
            raise ConfigError("at least one modality is required")
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate modality names {names}")
        for m in self.modalities:
            if m.kind not in KINDS:
                raise ConfigError(f"unknown modality kind {m.kind!r}")
            if m.size < 1:
                raise ConfigError(f"modality {m.name}: size must be positive")
        if sum(m.kind in AUDIO_KINDS for m in self.modalities) > 1:
            raise ConfigError("only one audio path (spectrogram or hotvec) may be active")

    def to_dict(self):
        return asdict(self)


def _build_encoder(spec: ModalitySpec, rng):
    kw = {}
    if spec.input_shape is not None:
        kw["input_shape"] = tuple(spec.input_shape)
    if spec.stem is not None:
        kw["stem"] = tuple(spec.stem)
    if spec.kind == "rgb":
        return VideoEncoder(3, spec.size, rng, spec.name, standardize=True, **kw)
    if spec.kind == "flow":
        return VideoEncoder(1, spec.size, rng, spec.name, **kw)
    if spec.kind == "spectrogram":
        return SpectrogramEncoder(spec.size, rng, spec.name, **kw)
    if spec.kind == "hotvec":
        return HotVectorEncoder(spec.input_dim or 8, spec.size, rng, spec.name)
    if spec.size != (spec.input_dim or spec.size):
        raise ConfigError(f"vector modality {spec.name}: size must equal input_dim")
    return VectorInput(spec.size)


def fuse(embeddings, use_attention: bool = False):
    """Concatenate per-modality vectors, gating each with attention first if asked.

    Returns ``(fused, offsets)`` where ``offsets[i]:offsets[i+1]`` slices out
    modality ``i``.
    """
    if not embeddings:
        raise ValueError("fuse needs at least one embedding")
    parts = [attention_apply(e) if use_attention else np.asarray(e, dtype=np.float64) for e in embeddings]
    offsets = np.cumsum([0] + [p.shape[-1] for p in parts])
    return np.concatenate(parts, axis=-1), offsets


class ClassifierHead(Sequential):
    """dense -> tanh -> dense; softmax is applied by the caller."""

    def __init__(self, n_in: int, hidden: int, rng, n_classes: int = 2):
        super().__init__(Dense(n_in, hidden, rng, "head.fc1"), Tanh(), Dense(hidden, n_classes, rng, "head.fc2"))


def classify(head: ClassifierHead, fused) -> np.ndarray:
    """Probability pair (non-speaker, speaker) for one fused vector or a batch."""
    fused = np.asarray(fused, dtype=np.float64)
    n_in = head.layers[0].W.value.shape[1]
    if fused.shape[-1] != n_in:
        raise ValueError(f"head expects {n_in} inputs, got {fused.shape[-1]}")
    return softmax(head.forward(fused))


class FusionModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoders = {}
        self.attn = {}
        for m in config.modalities:
            enc = _build_encoder(m, rng)
            self.encoders[m.name] = enc
            if config.attention:
                self.attn[m.name] = Attention(enc.embed, config.attention_projection, rng, f"{m.name}.attn")
        self.sizes = [self.encoders[m.name].embed for m in config.modalities]
        self.fused_dim = sum(self.sizes)
        self.head = ClassifierHead(self.fused_dim, config.head_hidden, rng)

    @property
    def modality_names(self):
        return [m.name for m in self.config.modalities]

    def params(self) -> list[Parameter]:
        out = []
        for name in self.modality_names:
            out += self.encoders[name].params()
            if name in self.attn:
                out += self.attn[name].params()
        return out + self.head.params()

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def prepare(self, name, raw):
        return self.encoders[name].prepare(raw)

    def embed(self, inputs: dict) -> list[np.ndarray]:
        out = []
        for name in self.modality_names:
            if name not in inputs:
                raise DataError(f"missing input for modality {name!r}")
            e = self.encoders[name].forward(np.asarray(inputs[name], dtype=np.float64))
            if name in self.attn:
                e = self.attn[name].forward(e)
            out.append(e)
        return out

    def logits(self, inputs: dict) -> np.ndarray:
        parts = self.embed(inputs)
        self._offsets = np.cumsum([0] + [p.shape[-1] for p in parts])
        return self.head.forward(np.concatenate(parts, axis=-1))

    def predict_proba(self, inputs: dict) -> np.ndarray:
        return softmax(self.logits(inputs))

    def backward(self, dlogits):
        dfused = self.head.backward(dlogits)
        for i, name in enumerate(self.modality_names):
            g = dfused[:, self._offsets[i]:self._offsets[i + 1]]
            if name in self.attn:
                g = self.attn[name].backward(g)
            self.encoders[name].backward(g)

    def loss_and_grad(self, inputs: dict, labels) -> float:
        """Mean cross-entropy over the batch; gradients are accumulated into the parameters."""
        loss, dlogits = softmax_cross_entropy(self.logits(inputs), np.asarray(labels, dtype=int))
        self.backward(dlogits)
        return loss

    def loss(self, inputs: dict, labels) -> float:
        loss, _ = softmax_cross_entropy(self.logits(inputs), np.asarray(labels, dtype=int))
        return loss
