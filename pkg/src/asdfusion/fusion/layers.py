"""Layers with explicit forward/backward passes.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Parameter.grad`` during ``backward``.
Inputs carry a leading batch axis.
"""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..numerics import Parameter, affine, affine_backward, sigmoid, softmax, uniform_init


class Layer:
    def params(self) -> list[Parameter]:
        return []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Sequential(Layer):
    def __init__(self, *layers):
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "dense"):
        self.W = Parameter(f"{name}.W", uniform_init(rng, (n_out, n_in), n_in))
        self.b = Parameter(f"{name}.b", np.zeros(n_out))
        self._x = None

    def params(self):
        return [self.W, self.b]

    def forward(self, x):
        self._x = x
        return affine(self.W.value, self.b.value, x)

    def backward(self, grad):
        dW, db, dx = affine_backward(self.W.value, self._x, grad)
        self.W.grad += dW
        self.b.grad += db
        return dx


class Tanh(Layer):
    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad):
        return grad * (1.0 - self._y ** 2)


class Conv3d(Layer):
    """Valid 3-D cross-correlation over (N, C, T, H, W) input."""

    def __init__(self, in_ch: int, out_ch: int, kernel, stride, rng: np.random.Generator, name: str = "conv"):
        kernel = tuple(int(k) for k in kernel)
        self.stride = tuple(int(s) for s in stride)
        if min(kernel) < 1 or min(self.stride) < 1:
            raise ValueError("kernel and stride must be positive")
        fan_in = in_ch * int(np.prod(kernel))
        self.weight = Parameter(f"{name}.weight", uniform_init(rng, (out_ch, in_ch) + kernel, fan_in))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_ch))
        self._x = None

    @property
    def kernel(self):
        return self.weight.value.shape[2:]

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, in_shape):
        return kernels.conv_output_shape(in_shape, self.kernel, self.stride)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 5:
            raise ValueError(f"conv3d expects (N, C, T, H, W), got shape {x.shape}")
        if x.shape[1] != self.weight.value.shape[1]:
            raise ValueError(f"conv3d expects {self.weight.value.shape[1]} input channels, got {x.shape[1]}")
        if any(i < k for i, k in zip(x.shape[2:], self.kernel)):
            raise ValueError(f"input {x.shape[2:]} smaller than kernel {self.kernel}")
        self._x = x
        return kernels.conv3d_forward(x, self.weight.value, self.bias.value, self.stride)

    def backward(self, grad):
        dx, dw, db = kernels.conv3d_backward(self._x, self.weight.value, grad, self.stride)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


def conv3d_forward(layer: Conv3d, x):
    """Single-sample convenience: x is (C, T, H, W)."""
    return layer.forward(np.asarray(x)[None])[0]


class AvgPool3d(Layer):
    """Non-overlapping block mean; trailing cells that do not fill a block are cropped."""

    def __init__(self, factor):
        self.factor = tuple(int(f) for f in factor)

    def output_shape(self, in_shape):
        return tuple(i // f for i, f in zip(in_shape, self.factor))

    def forward(self, x):
        ft, fh, fw = self.factor
        N, C, T, H, W = x.shape
        To, Ho, Wo = T // ft, H // fh, W // fw
        self._in_shape = x.shape
        if self.factor == (1, 1, 1):
            return x
        xc = x[:, :, :To * ft, :Ho * fh, :Wo * fw]
        return xc.reshape(N, C, To, ft, Ho, fh, Wo, fw).mean(axis=(3, 5, 7))

    def backward(self, grad):
        if self.factor == (1, 1, 1):
            return grad
        ft, fh, fw = self.factor
        N, C, To, Ho, Wo = grad.shape
        out = np.zeros(self._in_shape)
        g = grad / (ft * fh * fw)
        out[:, :, :To * ft, :Ho * fh, :Wo * fw] = np.repeat(np.repeat(np.repeat(g, ft, 2), fh, 3), fw, 4)
        return out


class GlobalMeanPool(Layer):
    """(N, C, T, H, W) -> (N, C)."""

    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3, 4))

    def backward(self, grad):
        n = int(np.prod(self._shape[2:]))
        return np.broadcast_to((grad / n)[:, :, None, None, None], self._shape).copy()


class Attention(Layer):
    """o = softmax(a) * x with a = x, or a = Dense(x) when ``projection`` is on."""

    def __init__(self, n: int, projection: bool = False, rng=None, name: str = "attn"):
        self.n = n
        self.proj = Dense(n, n, rng, f"{name}.proj") if projection else None

    def params(self):
        return self.proj.params() if self.proj else []

    def forward(self, x):
        self._x = x
        a = self.proj.forward(x) if self.proj else x
        self._s = softmax(a)
        return _gate(a, x)

    def backward(self, grad):
        s, x = self._s, self._x
        ds = grad * x
        da = s * (ds - np.sum(ds * s, axis=-1, keepdims=True))
        dx = grad * s
        if self.proj:
            dx = dx + self.proj.backward(da)
        else:
            dx = dx + da
        return dx


def _gate(a, x):
    # (e * x) / sum(e) rather than softmax(a) * x: a constant vector c maps to c / n exactly
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return (e * x) / e.sum(axis=-1, keepdims=True)


def attention_apply(x) -> np.ndarray:
    """Parameter-free attention gating of one vector: softmax(x) * x."""
    x = np.asarray(x, dtype=np.float64)
    softmax(x)  # validates: non-empty and finite
    return _gate(x, x)


class GRU(Layer):
    """Gated recurrent unit without biases.

    z = sig(Wz x + Uz h), r = sig(Wr x + Ur h), c = tanh(W x + U (r*h)),
    h' = c (1 - z) + z h.  ``forward`` consumes (N, T, D) and returns the
    final hidden state (N, H) starting from h = 0.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, name: str = "gru"):
        if hidden < 1:
            raise ValueError("hidden size must be >= 1")
        self.n_in = n_in
        self.hidden = hidden
        self.W = Parameter(f"{name}.W", uniform_init(rng, (hidden, n_in), n_in))
        self.U = Parameter(f"{name}.U", uniform_init(rng, (hidden, hidden), hidden))
        self.Wz = Parameter(f"{name}.Wz", uniform_init(rng, (hidden, n_in), n_in))
        self.Uz = Parameter(f"{name}.Uz", uniform_init(rng, (hidden, hidden), hidden))
        self.Wr = Parameter(f"{name}.Wr", uniform_init(rng, (hidden, n_in), n_in))
        self.Ur = Parameter(f"{name}.Ur", uniform_init(rng, (hidden, hidden), hidden))

    def params(self):
        return [self.W, self.U, self.Wz, self.Uz, self.Wr, self.Ur]

    def step(self, x, h, z=None, r=None):
        """One timestep; ``z`` / ``r`` override the gates when given."""
        if x.shape[-1] != self.n_in or h.shape[-1] != self.hidden:
            raise ValueError(f"gru step: x {x.shape} / h {h.shape} do not match ({self.n_in}, {self.hidden})")
        if z is None:
            z = sigmoid(x @ self.Wz.value.T + h @ self.Uz.value.T)
        if r is None:
            r = sigmoid(x @ self.Wr.value.T + h @ self.Ur.value.T)
        c = np.tanh(x @ self.W.value.T + (r * h) @ self.U.value.T)
        return c * (1.0 - z) + z * h, (z, r, c)

    def forward(self, seq):
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim != 3 or seq.shape[2] != self.n_in:
            raise ValueError(f"gru expects (N, T, {self.n_in}), got {seq.shape}")
        h = np.zeros((seq.shape[0], self.hidden))
        self._cache = []
        for t in range(seq.shape[1]):
            x = seq[:, t]
            h_new, gates = self.step(x, h)
            self._cache.append((x, h, gates))
            h = h_new
        return h

    def backward(self, grad):
        dh = grad
        N = grad.shape[0]
        dseq = np.zeros((N, len(self._cache), self.n_in))
        for t in range(len(self._cache) - 1, -1, -1):
            x, h, (z, r, c) = self._cache[t]
            dc = dh * (1.0 - z)
            dz = dh * (h - c)
            dh_prev = dh * z
            dac = dc * (1.0 - c * c)
            self.W.grad += dac.T @ x
            self.U.grad += dac.T @ (r * h)
            drh = dac @ self.U.value
            dr = drh * h
            dh_prev += drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            self.Wz.grad += daz.T @ x
            self.Uz.grad += daz.T @ h
            self.Wr.grad += dar.T @ x
            self.Ur.grad += dar.T @ h
            dseq[:, t] = dac @ self.W.value + daz @ self.Wz.value + dar @ self.Wr.value
            dh_prev += daz @ self.Uz.value + dar @ self.Ur.value
            dh = dh_prev
        return dseq


def gru_step(layer: GRU, x_t, h_prev, z=None, r=None):
    """h_t for a single input vector and previous state."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    h, _ = layer.step(x_t, h_prev, z, r)
    return h


def gru_sequence(layer: GRU, seq, timesteps: int | None = 16):
    """Fold ``gru_step`` over a (T, D) sequence from h = 0; returns h_T."""
    m = seq.matrix if hasattr(seq, "matrix") else np.asarray(seq, dtype=np.float64)
    if timesteps is not None and m.shape[0] != timesteps:
        raise ValueError(f"expected {timesteps} timesteps, got {m.shape[0]}")
    return layer.forward(m[None])[0]
