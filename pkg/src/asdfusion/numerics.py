"""Dense float64 primitives, Adam, and a finite-difference gradient checker.

Arrays are plain ``numpy.ndarray`` of dtype float64; that is the tensor type
used throughout the package.  Differentiation is per layer (see
:mod:`asdfusion.fusion.layers`): every primitive here that needs a gradient
comes with a matching ``*_backward`` function.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import DataError, NumericError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ValueError(f"{self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}")

    def zero_grad(self):
        self.grad[...] = 0.0


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)]."""
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{what} contains non-finite values")


def softmax(x) -> np.ndarray:
    """Softmax along the last axis, computed with max-subtraction."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or x.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    _check_finite(x, "softmax input")
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def sigmoid(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def affine(W, b, x) -> np.ndarray:
    """``W @ x + b`` for a single vector or a batch of row vectors."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise ValueError(f"affine: W {W.shape}, b {b.shape}, x {x.shape} are inconsistent")
    return x @ W.T + b


def affine_backward(W, x, grad_out):
    """Gradients of ``affine`` w.r.t. (W, b, x) given dL/d(out)."""
    x2 = np.atleast_2d(x)
    g2 = np.atleast_2d(grad_out)
    dW = g2.T @ x2
    db = g2.sum(axis=0)
    dx = (g2 @ W).reshape(np.shape(x))
    return dW, db, dx


def cross_entropy(probs, labels):
    """Mean negative log-likelihood of integer ``labels`` under row ``probs``."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def softmax_cross_entropy(logits, labels):
    """Loss and d(loss)/d(logits) for softmax followed by mean cross-entropy."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(labels)
    p = softmax(logits)
    loss = cross_entropy(p, labels)
    grad = p.copy()
    grad[np.arange(len(labels)), labels] -= 1.0
    return loss, grad / len(labels)


@dataclass
class AdamState:
    lr: float = 0.05
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Iterable[Parameter], state: AdamState) -> AdamState:
    """One bias-corrected Adam update over ``params``; gradients are zeroed after.

    Parameters are updated in place and ``state`` is mutated (its step
    counter advances by exactly one).  The state is also returned for
    convenience.
    """
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in parameter {p.name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        if m.shape != p.value.shape:
            raise ValueError(f"Adam moment shape mismatch for {p.name!r}")
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad * p.grad
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.zero_grad()
    return state


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of the gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place and restored, so callers may pass the live
    value array of a :class:`Parameter`.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x)
    if x.dtype != np.float64:
        raise DataError("finite_diff_grad needs a float64 array")
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"function is non-finite near index {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(a, b) -> float:
    """||a - b|| / max(||a||, ||b||), with a floor so zero-vs-zero gives 0."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
