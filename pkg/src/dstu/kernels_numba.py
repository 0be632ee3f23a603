"""Numba-jitted kernels; see kernels_numpy for the reference semantics."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def conv2d_forward(x, w, stride, pad):
    B, H, W, Ci = x.shape
    kh, kw, _, Co = w.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    y = np.zeros((B, Ho, Wo, Co), dtype=x.dtype)
    for b in range(B):
        for i in range(Ho):
            for u in range(kh):
                ii = i * stride + u - pad
                if ii < 0 or ii >= H:
                    continue
                for j in range(Wo):
                    for v in range(kw):
                        jj = j * stride + v - pad
                        if jj < 0 or jj >= W:
                            continue
                        for ci in range(Ci):
                            xv = x[b, ii, jj, ci]
                            for co in range(Co):
                                y[b, i, j, co] += xv * w[u, v, ci, co]
    return y


@njit(cache=True)
def conv2d_grad_input(g, w, stride, pad, H, W):
    B, Ho, Wo, Co = g.shape
    kh, kw, Ci, _ = w.shape
    gx = np.zeros((B, H, W, Ci), dtype=g.dtype)
    for b in range(B):
        for i in range(Ho):
            for u in range(kh):
                ii = i * stride + u - pad
                if ii < 0 or ii >= H:
                    continue
                for j in range(Wo):
                    for v in range(kw):
                        jj = j * stride + v - pad
                        if jj < 0 or jj >= W:
                            continue
                        for ci in range(Ci):
                            acc = 0.0
                            for co in range(Co):
                                acc += g[b, i, j, co] * w[u, v, ci, co]
                            gx[b, ii, jj, ci] += acc
    return gx


@njit(cache=True)
def conv2d_grad_weight(x, g, stride, pad, kh, kw):
    B, H, W, Ci = x.shape
    _, Ho, Wo, Co = g.shape
    gw = np.zeros((kh, kw, Ci, Co), dtype=x.dtype)
    for b in range(B):
        for i in range(Ho):
            for u in range(kh):
                ii = i * stride + u - pad
                if ii < 0 or ii >= H:
                    continue
                for j in range(Wo):
                    for v in range(kw):
                        jj = j * stride + v - pad
                        if jj < 0 or jj >= W:
                            continue
                        for ci in range(Ci):
                            xv = x[b, ii, jj, ci]
                            for co in range(Co):
                                gw[u, v, ci, co] += xv * g[b, i, j, co]
    return gw


@njit(cache=True)
def box_mean(m, k):
    H, W = m.shape
    r = k // 2
    out = np.empty((H, W), dtype=np.float64)
    for i in range(H):
        i0 = max(0, i - r)
        i1 = min(H, i + r + 1)
        for j in range(W):
            j0 = max(0, j - r)
            j1 = min(W, j + r + 1)
            s = 0.0
            for a in range(i0, i1):
                for b in range(j0, j1):
                    s += m[a, b]
            out[i, j] = s / ((i1 - i0) * (j1 - j0))
    return out


@njit(cache=True)
def resize_bilinear(img, out_h, out_w):
    H, W, C = img.shape
    sy = H / out_h
    sx = W / out_w
    out = np.empty((out_h, out_w, C), dtype=img.dtype)
    for i in range(out_h):
        fy = (i + 0.5) * sy - 0.5
        if fy < 0.0:
            fy = 0.0
        if fy > H - 1.0:
            fy = H - 1.0
        y0 = int(math.floor(fy))
        y1 = min(y0 + 1, H - 1)
        wy = fy - y0
        for j in range(out_w):
            fx = (j + 0.5) * sx - 0.5
            if fx < 0.0:
                fx = 0.0
            if fx > W - 1.0:
                fx = W - 1.0
            x0 = int(math.floor(fx))
            x1 = min(x0 + 1, W - 1)
            wx = fx - x0
            for c in range(C):
                top = img[y0, x0, c] * (1 - wx) + img[y0, x1, c] * wx
                bot = img[y1, x0, c] * (1 - wx) + img[y1, x1, c] * wx
                out[i, j, c] = top * (1 - wy) + bot * wy
    return out


@njit(cache=True)
def resize_nearest(m, out_h, out_w):
    H, W = m.shape
    out = np.empty((out_h, out_w), dtype=m.dtype)
    for i in range(out_h):
        iy = min(int((i + 0.5) * H / out_h), H - 1)
        for j in range(out_w):
            ix = min(int((j + 0.5) * W / out_w), W - 1)
            out[i, j] = m[iy, ix]
    return out


@njit(cache=True)
def scatter_add_rows(acc, idx, updates):
    n, h = updates.shape
    for i in range(n):
        row = idx[i]
        for c in range(h):
            acc[row, c] += updates[i, c]
    return acc


@njit(cache=True)
def _erf_flat(x, out):
    for i in range(x.size):
        out[i] = math.erf(x[i])


def erf(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(x.size, dtype=np.float64)
    _erf_flat(x.reshape(-1), out)
    return out.reshape(x.shape)
