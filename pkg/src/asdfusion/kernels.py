"""Hot numeric loops, each with a numba kernel and a numpy fallback.

The public names (``conv3d_forward``, ``conv3d_backward``, ``lk_iterate``)
dispatch on :data:`asdfusion._accel.USE_NUMBA`.  Both variants are exported
with ``_numba`` / ``_numpy`` suffixes so tests and the benchmark can pit
them against each other.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from ._accel import USE_NUMBA, njit


# ---------------------------------------------------------------------------
# 3-D convolution (valid cross-correlation), x: (N, C, T, H, W)
# ---------------------------------------------------------------------------

def conv_output_shape(in_shape, kernel, stride):
    return tuple((i - k) // s + 1 for i, k, s in zip(in_shape, kernel, stride))


def _windows(x, kshape, stride):
    st, sh, sw = stride
    win = sliding_window_view(x, kshape, axis=(2, 3, 4))
    return win[:, :, ::st, ::sh, ::sw]


def conv3d_forward_numpy(x, w, b, stride):
    win = _windows(x, w.shape[2:], stride)  # (N, C, To, Ho, Wo, kt, kh, kw)
    out = np.tensordot(win, w, axes=([1, 5, 6, 7], [1, 2, 3, 4]))  # (N, To, Ho, Wo, O)
    out = np.moveaxis(out, -1, 1)
    out += b[None, :, None, None, None]
    return np.ascontiguousarray(out)


def conv3d_backward_numpy(x, w, grad_out, stride):
    st, sh, sw = stride
    _, _, kt, kh, kw = w.shape
    _, _, To, Ho, Wo = grad_out.shape
    win = _windows(x, (kt, kh, kw), stride)
    dw = np.tensordot(grad_out, win, axes=([0, 2, 3, 4], [0, 2, 3, 4]))
    db = grad_out.sum(axis=(0, 2, 3, 4))
    dx = np.zeros_like(x)
    for a in range(kt):
        for p in range(kh):
            for q in range(kw):
                contrib = np.tensordot(grad_out, w[:, :, a, p, q], axes=([1], [0]))
                dx[:, :, a:a + st * To:st, p:p + sh * Ho:sh, q:q + sw * Wo:sw] += np.moveaxis(contrib, -1, 1)
    return dx, dw, db


@njit(cache=True)
def _im2col_nb(xn, kt, kh, kw, st, sh, sw, To, Ho, Wo, cols):
    C = xn.shape[0]
    r = 0
    for c in range(C):
        for a in range(kt):
            for p in range(kh):
                for q in range(kw):
                    k = 0
                    for t in range(To):
                        for i in range(Ho):
                            row = xn[c, t * st + a, i * sh + p]
                            for j in range(Wo):
                                cols[r, k] = row[j * sw + q]
                                k += 1
                    r += 1


@njit(cache=True)
def _col2im_add_nb(cols, kt, kh, kw, st, sh, sw, To, Ho, Wo, dxn):
    C = dxn.shape[0]
    r = 0
    for c in range(C):
        for a in range(kt):
            for p in range(kh):
                for q in range(kw):
                    k = 0
                    for t in range(To):
                        for i in range(Ho):
                            row = dxn[c, t * st + a, i * sh + p]
                            for j in range(Wo):
                                row[j * sw + q] += cols[r, k]
                                k += 1
                    r += 1


@njit(cache=True)
def _conv3d_fwd_nb(x, wmat, b, kt, kh, kw, st, sh, sw, out):
    N, C = x.shape[0], x.shape[1]
    O = wmat.shape[0]
    To, Ho, Wo = out.shape[2], out.shape[3], out.shape[4]
    cols = np.empty((C * kt * kh * kw, To * Ho * Wo))
    for n in range(N):
        _im2col_nb(x[n], kt, kh, kw, st, sh, sw, To, Ho, Wo, cols)
        res = wmat @ cols
        for o in range(O):
            out[n, o] = res[o].reshape((To, Ho, Wo)) + b[o]


@njit(cache=True)
def _conv3d_bwd_nb(x, wmat, g, kt, kh, kw, st, sh, sw, dx, dw, db):
    N, C = x.shape[0], x.shape[1]
    O = wmat.shape[0]
    To, Ho, Wo = g.shape[2], g.shape[3], g.shape[4]
    cols = np.empty((C * kt * kh * kw, To * Ho * Wo))
    wt = np.ascontiguousarray(wmat.T)
    for n in range(N):
        gn = np.ascontiguousarray(g[n]).reshape((O, To * Ho * Wo))
        _im2col_nb(x[n], kt, kh, kw, st, sh, sw, To, Ho, Wo, cols)
        dw += gn @ cols.T
        for o in range(O):
            db[o] += gn[o].sum()
        _col2im_add_nb(wt @ gn, kt, kh, kw, st, sh, sw, To, Ho, Wo, dx[n])


def conv3d_forward_numba(x, w, b, stride):
    out_shape = (x.shape[0], w.shape[0]) + conv_output_shape(x.shape[2:], w.shape[2:], stride)
    out = np.empty(out_shape)
    kt, kh, kw = w.shape[2:]
    _conv3d_fwd_nb(np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(w.reshape(w.shape[0], -1)),
                   np.ascontiguousarray(b, dtype=np.float64), kt, kh, kw, *stride, out)
    return out


def conv3d_backward_numba(x, w, grad_out, stride):
    dx = np.zeros_like(x, dtype=np.float64)
    dwm = np.zeros((w.shape[0], int(np.prod(w.shape[1:]))))
    db = np.zeros(w.shape[0])
    kt, kh, kw = w.shape[2:]
    _conv3d_bwd_nb(np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(w.reshape(w.shape[0], -1)),
                   np.ascontiguousarray(grad_out, dtype=np.float64), kt, kh, kw, *stride, dx, dwm, db)
    return dx, dwm.reshape(w.shape), db


# ---------------------------------------------------------------------------
# Lucas-Kanade refinement at one pyramid level
# ---------------------------------------------------------------------------

def _bilinear_sample_numpy(img, ys, xs):
    H, W = img.shape
    ys = np.clip(ys, 0.0, H - 1.0)
    xs = np.clip(xs, 0.0, W - 1.0)
    y0 = np.minimum(np.floor(ys).astype(np.int64), H - 2) if H > 1 else np.zeros(ys.shape, np.int64)
    x0 = np.minimum(np.floor(xs).astype(np.int64), W - 2) if W > 1 else np.zeros(xs.shape, np.int64)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    fy = ys - y0
    fx = xs - x0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _box_sum_numpy(a, half):
    size = 2 * half + 1
    return ndimage.uniform_filter(a, size=size, mode="constant") * (size * size)


def lk_iterate_numpy(prev, nxt, ix, iy, u, v, half, iters, det_min):
    H, W = prev.shape
    gy, gx = np.mgrid[0:H, 0:W].astype(np.float64)
    sxx = _box_sum_numpy(ix * ix, half)
    sxy = _box_sum_numpy(ix * iy, half)
    syy = _box_sum_numpy(iy * iy, half)
    det = sxx * syy - sxy * sxy
    ok = det >= det_min
    safe = np.where(ok, det, 1.0)
    for _ in range(iters):
        warped = _bilinear_sample_numpy(nxt, gy + v, gx + u)
        it = warped - prev
        sxt = _box_sum_numpy(ix * it, half)
        syt = _box_sum_numpy(iy * it, half)
        du = (-syy * sxt + sxy * syt) / safe
        dv = (sxy * sxt - sxx * syt) / safe
        u = u + np.where(ok, du, 0.0)
        v = v + np.where(ok, dv, 0.0)
    return u, v


@njit(cache=True)
def _box_sum_nb(a, half):
    # separable running sums; out-of-range samples count as zero
    H, W = a.shape
    tmp = np.empty((H, W))
    out = np.empty((H, W))
    for y in range(H):
        s = 0.0
        for x in range(min(half, W)):
            s += a[y, x]
        for x in range(W):
            if x + half < W:
                s += a[y, x + half]
            if x - half - 1 >= 0:
                s -= a[y, x - half - 1]
            tmp[y, x] = s
    colsum = np.zeros(W)
    for y in range(min(half, H)):
        for x in range(W):
            colsum[x] += tmp[y, x]
    for y in range(H):
        if y + half < H:
            for x in range(W):
                colsum[x] += tmp[y + half, x]
        if y - half - 1 >= 0:
            for x in range(W):
                colsum[x] -= tmp[y - half - 1, x]
        for x in range(W):
            out[y, x] = colsum[x]
    return out


@njit(cache=True)
def _lk_iterate_nb(prev, nxt, ix, iy, u, v, half, iters, det_min):
    H, W = prev.shape
    sxx = _box_sum_nb(ix * ix, half)
    sxy = _box_sum_nb(ix * iy, half)
    syy = _box_sum_nb(iy * iy, half)
    pt = np.empty((H, W))
    qt = np.empty((H, W))
    for _ in range(iters):
        for y in range(H):
            for x in range(W):
                sy = min(max(y + v[y, x], 0.0), H - 1.0)
                sx = min(max(x + u[y, x], 0.0), W - 1.0)
                y0 = min(int(np.floor(sy)), max(H - 2, 0))
                x0 = min(int(np.floor(sx)), max(W - 2, 0))
                y1 = min(y0 + 1, H - 1)
                x1 = min(x0 + 1, W - 1)
                fy = sy - y0
                fx = sx - x0
                top = nxt[y0, x0] * (1.0 - fx) + nxt[y0, x1] * fx
                bot = nxt[y1, x0] * (1.0 - fx) + nxt[y1, x1] * fx
                it = top * (1.0 - fy) + bot * fy - prev[y, x]
                pt[y, x] = ix[y, x] * it
                qt[y, x] = iy[y, x] * it
        sxt = _box_sum_nb(pt, half)
        syt = _box_sum_nb(qt, half)
        for y in range(H):
            for x in range(W):
                det = sxx[y, x] * syy[y, x] - sxy[y, x] * sxy[y, x]
                if det >= det_min:
                    u[y, x] += (-syy[y, x] * sxt[y, x] + sxy[y, x] * syt[y, x]) / det
                    v[y, x] += (sxy[y, x] * sxt[y, x] - sxx[y, x] * syt[y, x]) / det
    return u, v


def lk_iterate_numba(prev, nxt, ix, iy, u, v, half, iters, det_min):
    return _lk_iterate_nb(prev, nxt, ix, iy, u.copy(), v.copy(), half, iters, det_min)


if USE_NUMBA:
    conv3d_forward = conv3d_forward_numba
    conv3d_backward = conv3d_backward_numba
    lk_iterate = lk_iterate_numba
else:
    conv3d_forward = conv3d_forward_numpy
    conv3d_backward = conv3d_backward_numpy
    lk_iterate = lk_iterate_numpy
