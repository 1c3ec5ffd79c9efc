import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import ndimage

from asdfusion import _accel
from asdfusion import kernels as K

pytestmark = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")

CONV_CASES = [
    ((2, 3, 6, 9, 9), (4, 3, 3, 3, 3), (1, 1, 1)),
    ((3, 1, 16, 28, 28), (4, 1, 3, 3, 3), (2, 2, 2)),
    ((1, 4, 7, 13, 13), (8, 4, 3, 3, 3), (1, 2, 2)),
    ((2, 2, 5, 8, 11), (3, 2, 1, 3, 2), (1, 3, 2)),
]


def naive_conv(x, w, b, stride):
    N, C = x.shape[:2]
    O = w.shape[0]
    out_shape = K.conv_output_shape(x.shape[2:], w.shape[2:], stride)
    out = np.zeros((N, O) + out_shape)
    kt, kh, kw = w.shape[2:]
    for n in range(N):
        for o in range(O):
            for t in range(out_shape[0]):
                for i in range(out_shape[1]):
                    for j in range(out_shape[2]):
                        a, p, q = t * stride[0], i * stride[1], j * stride[2]
                        out[n, o, t, i, j] = b[o] + np.sum(w[o] * x[n, :, a:a + kt, p:p + kh, q:q + kw])
    return out


@pytest.mark.parametrize("xs,ws,stride", CONV_CASES)
def test_conv_forward_variants_agree_with_naive(xs, ws, stride):
    rng = np.random.default_rng(0)
    x, w, b = rng.standard_normal(xs), rng.standard_normal(ws), rng.standard_normal(ws[0])
    ref = naive_conv(x, w, b, stride)
    np.testing.assert_allclose(K.conv3d_forward_numpy(x, w, b, stride), ref, atol=1e-11)
    np.testing.assert_allclose(K.conv3d_forward_numba(x, w, b, stride), ref, atol=1e-11)


@pytest.mark.parametrize("xs,ws,stride", CONV_CASES)
def test_conv_backward_variants_agree(xs, ws, stride):
    rng = np.random.default_rng(1)
    x, w = rng.standard_normal(xs), rng.standard_normal(ws)
    g = rng.standard_normal((xs[0], ws[0]) + K.conv_output_shape(xs[2:], ws[2:], stride))
    for a, c in zip(K.conv3d_backward_numpy(x, w, g, stride), K.conv3d_backward_numba(x, w, g, stride)):
        np.testing.assert_allclose(a, c, atol=1e-10)


def test_lk_variants_agree():
    rng = np.random.default_rng(2)
    prev = ndimage.gaussian_filter(rng.random((40, 48)), 1.5)
    nxt = np.roll(prev, (1, 2), axis=(0, 1))
    iy, ix = np.gradient(prev)
    u0 = rng.standard_normal(prev.shape) * 0.3
    v0 = rng.standard_normal(prev.shape) * 0.3
    a = K.lk_iterate_numpy(prev, nxt, ix, iy, u0.copy(), v0.copy(), 2, 3, 1e-9)
    b = K.lk_iterate_numba(prev, nxt, ix, iy, u0.copy(), v0.copy(), 2, 3, 1e-9)
    for p, q in zip(a, b):
        np.testing.assert_allclose(p, q, atol=1e-9)


def test_lk_singular_window_left_unchanged():
    flat = np.full((20, 20), 0.5)
    z = np.zeros_like(flat)
    for fn in (K.lk_iterate_numpy, K.lk_iterate_numba):
        u, v = fn(flat, flat, z, z, z.copy(), z.copy(), 2, 3, 1e-9)
        assert np.array_equal(u, z) and np.array_equal(v, z)


def test_env_flag_selects_numpy_backend():
    code = "import asdfusion, asdfusion.kernels as k; print(asdfusion.backend(), k.conv3d_forward.__name__)"
    env = dict(os.environ, ASDFUSION_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "conv3d_forward_numpy"]
    env["ASDFUSION_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numba", "conv3d_forward_numba"]
