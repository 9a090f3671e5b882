"""Hot numeric kernels: resampling, rotation, and the fused training step.

Each kernel has two implementations: a numba ``@njit``-compiled loop and a
pure-numpy fallback.  The active path is selected once at import time: numba
is used when it imports cleanly and the environment variable
``WILDLOOP_NO_NUMBA`` is unset (any of ``1``/``true``/``yes`` disables it).
``benchmarks/bench_kernels.py`` compares the two paths for agreement and
speed.

All kernels are deterministic: loops accumulate in a fixed order, so results
are reproducible run to run within one path.  The two paths agree to floating
point rounding (bit-identical for the index-gather kernels).
"""
from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("WILDLOOP_NO_NUMBA", "").strip().lower()
_DISABLED = _flag in ("1", "true", "yes")

if not _DISABLED:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):  # no-op decorator when running the numpy path
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


# =============================================================================
# Resampling
# =============================================================================

@njit(cache=True)
def _resize_nearest_nb(src, side):
    """Nearest-neighbor resample of an (h, w, 3) array to (side, side, 3).

    Source indices are taken at half-pixel centers:
    ``sy = floor((i + 0.5) * h / side)``, clamped to the last row/column.
    """
    h, w = src.shape[0], src.shape[1]
    out = np.empty((side, side, 3), dtype=src.dtype)
    for i in range(side):
        sy = int((i + 0.5) * h / side)
        if sy > h - 1:
            sy = h - 1
        for j in range(side):
            sx = int((j + 0.5) * w / side)
            if sx > w - 1:
                sx = w - 1
            for c in range(3):
                out[i, j, c] = src[sy, sx, c]
    return out


def _resize_nearest_np(src, side):
    h, w = src.shape[0], src.shape[1]
    ys = np.minimum(((np.arange(side) + 0.5) * h / side).astype(np.int64), h - 1)
    xs = np.minimum(((np.arange(side) + 0.5) * w / side).astype(np.int64), w - 1)
    return src[ys][:, xs]


@njit(cache=True)
def _resize_bilinear_nb(src, side):
    """Bilinear resample of an (h, w, 3) float64 array to (side, side, 3).

    Half-pixel-center convention; out-of-range sample coordinates clamp to
    the image border (edge replication).  An identity resize (side == h == w)
    reproduces the input exactly.
    """
    h, w = src.shape[0], src.shape[1]
    out = np.empty((side, side, 3), dtype=np.float64)
    for i in range(side):
        sy = (i + 0.5) * h / side - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h - 1:
            sy = h - 1
        y0 = int(sy)
        y1 = y0 + 1 if y0 + 1 < h else h - 1
        fy = sy - y0
        for j in range(side):
            sx = (j + 0.5) * w / side - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1:
                sx = w - 1
            x0 = int(sx)
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            fx = sx - x0
            for c in range(3):
                top = src[y0, x0, c] * (1.0 - fx) + src[y0, x1, c] * fx
                bot = src[y1, x0, c] * (1.0 - fx) + src[y1, x1, c] * fx
                out[i, j, c] = top * (1.0 - fy) + bot * fy
    return out


def _resize_bilinear_np(src, side):
    h, w = src.shape[0], src.shape[1]
    sy = np.clip((np.arange(side) + 0.5) * h / side - 0.5, 0.0, h - 1)
    sx = np.clip((np.arange(side) + 0.5) * w / side - 0.5, 0.0, w - 1)
    y0 = sy.astype(np.int64)
    x0 = sx.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    return top * (1.0 - fy) + bot * fy


# =============================================================================
# Rotation
# =============================================================================

@njit(cache=True)
def _rotate_bilinear_nb(src, angle_rad):
    """Rotate an (h, w, 3) float64 array about its center.

    Inverse mapping with bilinear sampling; coordinates falling outside the
    source clamp to the border, so exposed corners are filled by edge
    replication rather than a constant color.  angle 0 is an exact identity.
    """
    h, w = src.shape[0], src.shape[1]
    out = np.empty_like(src)
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    cos_a = math.cos(angle_rad)
    sin_a = math.sin(angle_rad)
    for i in range(h):
        dy = i - cy
        for j in range(w):
            dx = j - cx
            sx = cx + cos_a * dx + sin_a * dy
            sy = cy - sin_a * dx + cos_a * dy
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1:
                sx = w - 1
            if sy < 0.0:
                sy = 0.0
            if sy > h - 1:
                sy = h - 1
            x0 = int(sx)
            y0 = int(sy)
            x1 = x0 + 1 if x0 + 1 < w else w - 1
            y1 = y0 + 1 if y0 + 1 < h else h - 1
            fx = sx - x0
            fy = sy - y0
            for c in range(3):
                top = src[y0, x0, c] * (1.0 - fx) + src[y0, x1, c] * fx
                bot = src[y1, x0, c] * (1.0 - fx) + src[y1, x1, c] * fx
                out[i, j, c] = top * (1.0 - fy) + bot * fy
    return out


def _rotate_bilinear_np(src, angle_rad):
    h, w = src.shape[0], src.shape[1]
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    cos_a = math.cos(angle_rad)
    sin_a = math.sin(angle_rad)
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    dx = jj - cx
    dy = ii - cy
    sx = np.clip(cx + cos_a * dx + sin_a * dy, 0.0, w - 1)
    sy = np.clip(cy - sin_a * dx + cos_a * dy, 0.0, h - 1)
    x0 = sx.astype(np.int64)
    y0 = sy.astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    top = src[y0, x0] * (1.0 - fx) + src[y0, x1] * fx
    bot = src[y1, x0] * (1.0 - fx) + src[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


# =============================================================================
# Fused softmax cross-entropy loss + gradient
# =============================================================================

@njit(cache=True)
def _softmax_xent_nb(X, y, sample_w, W, b, l2):
    """Weighted-mean softmax cross-entropy with L2, loss and gradients.

    Parameters
    ----------
    X : (n, d) float64
        Input features.
    y : (n,) int64
        Target class indices.
    sample_w : (n,) float64
        Per-sample weights; the loss is sum(w_i * ce_i) / sum(w_i), so a
        duplicated batch yields an identical gradient.
    W : (g, d) float64, b : (g,) float64
        Current parameters.
    l2 : float
        Ridge coefficient on W (bias excluded).

    Returns
    -------
    loss : float
    grad_W : (g, d) float64
    grad_b : (g,) float64
    """
    n, d = X.shape
    g = W.shape[0]
    grad_W = np.zeros((g, d), dtype=np.float64)
    grad_b = np.zeros(g, dtype=np.float64)
    z = np.empty(g, dtype=np.float64)
    loss = 0.0
    w_total = 0.0
    for i in range(n):
        for k in range(g):
            acc = b[k]
            for c in range(d):
                acc += W[k, c] * X[i, c]
            z[k] = acc
        m = z[0]
        for k in range(1, g):
            if z[k] > m:
                m = z[k]
        s = 0.0
        for k in range(g):
            z[k] = math.exp(z[k] - m)
            s += z[k]
        wi = sample_w[i]
        w_total += wi
        for k in range(g):
            p = z[k] / s
            delta = p - (1.0 if k == y[i] else 0.0)
            grad_b[k] += wi * delta
            for c in range(d):
                grad_W[k, c] += wi * delta * X[i, c]
        loss -= wi * math.log(z[y[i]] / s)
    inv = 1.0 / w_total
    loss *= inv
    penalty = 0.0
    for k in range(g):
        grad_b[k] *= inv
        for c in range(d):
            grad_W[k, c] *= inv
            penalty += W[k, c] * W[k, c]
            grad_W[k, c] += l2 * W[k, c]
    loss += 0.5 * l2 * penalty
    return loss, grad_W, grad_b


def _softmax_xent_np(X, y, sample_w, W, b, l2):
    n = X.shape[0]
    logits = X @ W.T + b
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    w_total = sample_w.sum()
    log_p = np.log(probs[np.arange(n), y])
    loss = -(sample_w * log_p).sum() / w_total
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta *= sample_w[:, None]
    grad_W = delta.T @ X / w_total + l2 * W
    grad_b = delta.sum(axis=0) / w_total
    loss += 0.5 * l2 * float((W * W).sum())
    return loss, grad_W, grad_b


# Active path, chosen at import.
if NUMBA_ENABLED:
    resize_nearest = _resize_nearest_nb
    resize_bilinear = _resize_bilinear_nb
    rotate_bilinear = _rotate_bilinear_nb
    softmax_xent = _softmax_xent_nb
else:
    resize_nearest = _resize_nearest_np
    resize_bilinear = _resize_bilinear_np
    rotate_bilinear = _rotate_bilinear_np
    softmax_xent = _softmax_xent_np
