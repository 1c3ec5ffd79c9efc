"""Per-modality encoders.

The video and spectrogram encoders are deliberately tiny: a fixed
block-average stem, two tanh convolutions, a global mean and one dense
layer.  ``prepare`` applies the parameter-free stem so callers can cache
stemmed clips instead of full-resolution ones.
"""
from __future__ import annotations

import numpy as np

from ..errors import DataError
from .layers import GRU, AvgPool3d, Conv3d, Dense, GlobalMeanPool, Layer, Sequential, Tanh

VIDEO_INPUT = (16, 224, 224)
SPEC_INPUT = (1, 62, 256)


class ConvEncoder(Layer):
    def __init__(self, in_channels: int, embed: int, input_shape, rng, name: str,
                 stem=(1, 8, 8), channels=(4, 8), kernels=((3, 3, 3), (3, 3, 3)),
                 strides=((2, 2, 2), (1, 2, 2)), standardize: bool = False):
        self.in_channels = in_channels
        self.standardize = standardize
        self.input_shape = tuple(input_shape)
        self.embed = embed
        self.stem = AvgPool3d(stem)
        shape = self.stem.output_shape(self.input_shape)
        self.prepared_shape = (in_channels,) + shape
        conv1 = Conv3d(in_channels, channels[0], kernels[0], strides[0], rng, f"{name}.conv1")
        shape = conv1.output_shape(shape)
        conv2 = Conv3d(channels[0], channels[1], kernels[1], strides[1], rng, f"{name}.conv2")
        shape = conv2.output_shape(shape)
        if min(shape) < 1:
            raise ValueError(f"{name}: input {input_shape} too small for the conv stack")
        self.net = Sequential(conv1, Tanh(), conv2, Tanh(), GlobalMeanPool(),
                              Dense(channels[1], embed, rng, f"{name}.fc"))

    def params(self):
        return self.net.params()

    def prepare(self, clip):
        """Stem a batch (N, C, T, H, W) or a single (C, T, H, W) clip."""
        x = np.asarray(clip, dtype=np.float64)
        single = x.ndim == 4
        if single:
            x = x[None]
        if x.shape[1:] != (self.in_channels,) + self.input_shape:
            raise DataError(f"encoder expects clips of shape {(self.in_channels,) + self.input_shape}, "
                            f"got {x.shape[1:]}")
        out = self.stem.forward(x)
        if self.standardize:
            # zero mean / unit variance per clip; flat clips map to zeros
            mu = out.mean(axis=(1, 2, 3, 4), keepdims=True)
            sd = out.std(axis=(1, 2, 3, 4), keepdims=True)
            out = np.where(sd < 1e-12, 0.0, (out - mu) / np.maximum(sd, 1e-12))
        return out[0] if single else out

    def forward(self, x):
        if x.shape[1:] != self.prepared_shape:
            raise DataError(f"encoder expects prepared input {self.prepared_shape}, got {x.shape[1:]}")
        return self.net.forward(x)

    def backward(self, grad):
        return self.net.backward(grad)


class VideoEncoder(ConvEncoder):
    def __init__(self, in_channels: int, embed: int, rng, name: str = "video", input_shape=VIDEO_INPUT, **kw):
        super().__init__(in_channels, embed, input_shape, rng, name, **kw)


class SpectrogramEncoder(ConvEncoder):
    """2-D encoder for (frames x 256) spectrograms, run as 3-D with a unit time axis."""

    def __init__(self, embed: int, rng, name: str = "spec", input_shape=SPEC_INPUT, stem=(1, 2, 4),
                 channels=(4, 8), kernels=((1, 3, 3), (1, 3, 3)), strides=((1, 2, 2), (1, 2, 2))):
        super().__init__(1, embed, input_shape, rng, name, stem, channels, kernels, strides)

    def prepare(self, clip):
        x = np.asarray(clip, dtype=np.float64)
        if x.ndim == 2:
            return super().prepare(x[None, None])
        if x.ndim == 3:  # batch of (frames, bins)
            return super().prepare(x[:, None, None])
        return super().prepare(x)


class HotVectorEncoder(Layer):
    """GRU over the 16 x (N_max + 1) hot-vector sequence; embedding = final state."""

    def __init__(self, dim: int, hidden: int, rng, name: str = "pybk", timesteps: int = 16):
        self.gru = GRU(dim, hidden, rng, f"{name}.gru")
        self.timesteps = timesteps
        self.embed = hidden
        self.prepared_shape = (timesteps, dim)

    def params(self):
        return self.gru.params()

    def prepare(self, seq):
        x = np.asarray(seq, dtype=np.float64)
        if x.shape[-2:] != self.prepared_shape:
            raise DataError(f"hot-vector encoder expects {self.prepared_shape}, got {x.shape[-2:]}")
        return x

    def forward(self, x):
        return self.gru.forward(self.prepare(x))

    def backward(self, grad):
        return self.gru.backward(grad)


class VectorInput(Layer):
    """Pass-through for precomputed embeddings."""

    def __init__(self, dim: int):
        self.embed = dim
        self.prepared_shape = (dim,)

    def prepare(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.embed:
            raise DataError(f"expected {self.embed}-dim vectors, got {x.shape[-1]}")
        return x

    def forward(self, x):
        return self.prepare(x)

    def backward(self, grad):
        return grad


def encoder_forward(encoder, clip) -> np.ndarray:
    """Embed one clip (FrameClip / FlowClip / SpectrogramClip / array)."""
    data = getattr(clip, "tensor", None)
    if data is None:
        data = getattr(clip, "matrix", clip)
    prepared = encoder.prepare(data)
    return encoder.forward(prepared[None])[0]
