"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both variants are imported directly, so the ASDFUSION_DISABLE_NUMBA flag does
not matter here.  Outputs are compared before timing.
"""
import argparse
import time

import numpy as np

from asdfusion import kernels as K


def best_of(fn, repeat):
    fn()  # warm-up (numba compile / cache load)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    x = rng.standard_normal((20, 3, 16, 28, 28))
    w = rng.standard_normal((4, 3, 3, 3, 3)) * 0.1
    b = rng.standard_normal(4)
    stride = (2, 2, 2)
    g = rng.standard_normal((20, 4) + K.conv_output_shape(x.shape[2:], w.shape[2:], stride))
    yield ("conv3d forward  (20x3x16x28x28)",
           lambda: K.conv3d_forward_numba(x, w, b, stride), lambda: K.conv3d_forward_numpy(x, w, b, stride))
    yield ("conv3d backward (20x3x16x28x28)",
           lambda: K.conv3d_backward_numba(x, w, g, stride), lambda: K.conv3d_backward_numpy(x, w, g, stride))

    from scipy import ndimage
    prev = ndimage.gaussian_filter(rng.random((224, 224)), 2.0)
    nxt = np.roll(prev, 2, axis=1)
    iy, ix = np.gradient(prev)
    z = np.zeros_like(prev)
    yield ("Lucas-Kanade 224x224, 3 iters",
           lambda: K.lk_iterate_numba(prev, nxt, ix, iy, z, z, 2, 3, 1e-9),
           lambda: K.lk_iterate_numpy(prev, nxt, ix, iy, z, z, 2, 3, 1e-9))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  max|diff|")
    for name, nb, npy in cases(rng):
        a, c = nb(), npy()
        a = a if isinstance(a, tuple) else (a,)
        c = c if isinstance(c, tuple) else (c,)
        diff = max(float(np.max(np.abs(p - q))) for p, q in zip(a, c))
        t_nb, t_np = best_of(nb, args.repeat), best_of(npy, args.repeat)
        print(f"{name:34s} {t_nb * 1e3:10.2f} {t_np * 1e3:10.2f} {t_np / t_nb:8.2f}  {diff:.2e}")


if __name__ == "__main__":
    main()
