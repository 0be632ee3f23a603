"""Pure-numpy reference kernels.

Signature-compatible with kernels_numba; this is the fallback path and the
ground truth the jitted kernels are tested against.  Convolutions loop over
the (small) kernel extent and vectorize over space; box sums use an
integral image, exact for 0/1 masks.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _erf


def conv2d_forward(x, w, stride, pad):
    """x (B,H,W,Ci), w (kh,kw,Ci,Co) -> (B,Ho,Wo,Co), zero padding."""
    B, H, W, Ci = x.shape
    kh, kw, _, Co = w.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    y = np.zeros((B, Ho, Wo, Co), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            patch = x[:, u : u + stride * Ho : stride, v : v + stride * Wo : stride, :]
            y += patch @ w[u, v]
    return y


def conv2d_grad_input(g, w, stride, pad, H, W):
    B, Ho, Wo, Co = g.shape
    kh, kw, Ci, _ = w.shape
    gx = np.zeros((B, H + 2 * pad, W + 2 * pad, Ci), dtype=g.dtype)
    for u in range(kh):
        for v in range(kw):
            gx[:, u : u + stride * Ho : stride, v : v + stride * Wo : stride, :] += g @ w[u, v].T
    if pad:
        gx = gx[:, pad : pad + H, pad : pad + W, :]
    return gx


def conv2d_grad_weight(x, g, stride, pad, kh, kw):
    B, H, W, Ci = x.shape
    _, Ho, Wo, Co = g.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    gw = np.zeros((kh, kw, Ci, Co), dtype=x.dtype)
    gflat = g.reshape(-1, Co)
    for u in range(kh):
        for v in range(kw):
            patch = x[:, u : u + stride * Ho : stride, v : v + stride * Wo : stride, :]
            gw[u, v] = patch.reshape(-1, Ci).T @ gflat
    return gw


def box_mean(m, k):
    """Mean of m over the k-by-k window around each pixel, restricted to
    pixels inside the image (valid-count normalization)."""
    H, W = m.shape
    r = k // 2
    integral = np.zeros((H + 1, W + 1), dtype=np.float64)
    integral[1:, 1:] = np.cumsum(np.cumsum(m, axis=0), axis=1)
    i0 = np.clip(np.arange(H) - r, 0, H)
    i1 = np.clip(np.arange(H) + r + 1, 0, H)
    j0 = np.clip(np.arange(W) - r, 0, W)
    j1 = np.clip(np.arange(W) + r + 1, 0, W)
    sums = (
        integral[i1[:, None], j1[None, :]]
        - integral[i0[:, None], j1[None, :]]
        - integral[i1[:, None], j0[None, :]]
        + integral[i0[:, None], j0[None, :]]
    )
    counts = (i1 - i0)[:, None] * (j1 - j0)[None, :]
    return sums / counts


def resize_bilinear(img, out_h, out_w):
    """img (H,W,C) -> (out_h,out_w,C); pixel-center sampling, edge clamped."""
    H, W, _ = img.shape
    sy, sx = H / out_h, W / out_w
    fy = np.clip((np.arange(out_h) + 0.5) * sy - 0.5, 0.0, H - 1.0)
    fx = np.clip((np.arange(out_w) + 0.5) * sx - 0.5, 0.0, W - 1.0)
    y0 = np.floor(fy).astype(np.int64)
    x0 = np.floor(fx).astype(np.int64)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = (fy - y0)[:, None, None]
    wx = (fx - x0)[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def resize_nearest(m, out_h, out_w):
    """m (H,W) -> (out_h,out_w) by nearest pixel-center sampling."""
    H, W = m.shape
    iy = np.minimum(((np.arange(out_h) + 0.5) * H / out_h).astype(np.int64), H - 1)
    ix = np.minimum(((np.arange(out_w) + 0.5) * W / out_w).astype(np.int64), W - 1)
    return m[iy[:, None], ix[None, :]]


def scatter_add_rows(acc, idx, updates):
    """acc[idx[n]] += updates[n] for each row n (repeated indices accumulate)."""
    np.add.at(acc, idx, updates)
    return acc


def erf(x):
    return _erf(x)
