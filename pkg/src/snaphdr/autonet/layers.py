"""Forward/backward pairs for the ops the U-Net needs.

Tensors are float64 ``(N, H, W, C)``.  Convolution kernels are
``(k, k, C_in, C_out)``; all convolutions are stride 1 with zero "same"
padding.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..imgcore import NUM_SLOTS, PERIOD


def _check_kernel(x, w):
    k = w.shape[0]
    if w.ndim != 4 or w.shape[1] != k or k % 2 == 0:
        raise ValueError(f"kernel must be (k, k, Cin, Cout) with odd k, got {w.shape}")
    if x.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ValueError(f"input {x.shape} does not match kernel {w.shape}")
    return k


def _pad(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))


def conv2d_forward(x, w, b=None):
    k = _check_kernel(x, w)
    n, h, wd, _ = x.shape
    xp = _pad(x, k // 2)
    out = np.zeros((n, h, wd, w.shape[3]))
    for i in range(k):
        for j in range(k):
            out += xp[:, i:i + h, j:j + wd, :] @ w[i, j]
    if b is not None:
        out += b
    return out


def conv2d_backward(gy, x, w, need_input=True):
    """Return ``(gx, gw, gb)``; ``gx`` is None when not requested."""
    if x is None:
        raise ValueError("backward needs the saved forward input")
    k = _check_kernel(x, w)
    n, h, wd, c = x.shape
    o = w.shape[3]
    p = k // 2
    gw = np.empty_like(w)
    if p and h * wd >= 256:
        # Flatten the padded grid so every tap is a contiguous row offset.
        hp, wp = h + 2 * p, wd + 2 * p
        xf = _pad(x, p).reshape(-1, c)
        gf = np.zeros((n, hp, wp, o))
        gf[:, p:p + h, p:p + wd] = gy
        gf = gf.reshape(-1, o)
        lo = p * wp + p
        hi = xf.shape[0] - lo
        gs = gf[lo:hi]
        for i in range(k):
            for j in range(k):
                s = (i - p) * wp + (j - p)
                gw[i, j] = xf[lo + s:hi + s].T @ gs
    else:
        xp = _pad(x, p)
        g2 = gy.reshape(-1, o)
        for i in range(k):
            for j in range(k):
                gw[i, j] = xp[:, i:i + h, j:j + wd, :].reshape(-1, c).T @ g2
    gb = gy.sum(axis=(0, 1, 2))
    gx = None
    if need_input:
        # Adjoint of a same-padded correlation: flip taps, swap channel roles.
        gx = conv2d_forward(gy, np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2)))
    return gx, gw, gb


# -- convolution on sub-mosaicked input -------------------------------------
#
# A sub-mosaic stack has one nonzero channel per pixel, fixed by the pixel's
# position modulo 4.  Folding each 4x4 block of the flat mosaic into channels
# (space-to-depth) turns a k x k convolution of the stack into a small dense
# convolution over blocks whose channels already carry the slot identity.
# ``mosaic_conv_*`` take flat planes ``(N, H, W, P)`` and a kernel laid out
# for the explicit stack ``(k, k, 16 P, C_out)`` (plane p, slot s -> channel
# 16 p + s), so results match ``conv2d_*`` on the stack exactly.


def _to_blocks(r):
    """Space-to-depth by 4; block channel ``(4 * row + col) * C + c``."""
    n, h, wd, c = r.shape
    if h % PERIOD or wd % PERIOD:
        raise ValueError("mosaic input dimensions must be multiples of 4")
    r = r.reshape(n, h // PERIOD, PERIOD, wd // PERIOD, PERIOD, c)
    return r.transpose(0, 1, 3, 2, 4, 5).reshape(n, h // PERIOD, wd // PERIOD, NUM_SLOTS * c)


def _from_blocks(y, c):
    n, hb, wb, _ = y.shape
    y = y.reshape(n, hb, wb, PERIOD, PERIOD, c)
    return y.transpose(0, 1, 3, 2, 4, 5).reshape(n, hb * PERIOD, wb * PERIOD, c)


@lru_cache(maxsize=None)
def _block_map(k, planes, out):
    """Scatter from a (k, k, 16P, O) kernel to its block-domain kernel."""
    c = k // 2
    radius = max(-((-c) // PERIOD), (PERIOD - 1 + c) // PERIOD)
    kb = 2 * radius + 1
    bi, bj, p, ri, ci, a, b, o = np.meshgrid(
        np.arange(kb), np.arange(kb), np.arange(planes), np.arange(PERIOD),
        np.arange(PERIOD), np.arange(PERIOD), np.arange(PERIOD), np.arange(out),
        indexing="ij")
    i = PERIOD * (bi - radius) + ri - a + c
    j = PERIOD * (bj - radius) + ci - b + c
    ok = (i >= 0) & (i < k) & (j >= 0) & (j < k)
    src = (i[ok], j[ok], (NUM_SLOTS * p + PERIOD * ri + ci)[ok], o[ok])
    dst = (bi[ok], bj[ok], ((PERIOD * ri + ci) * planes + p)[ok],
           ((PERIOD * a + b) * out + o)[ok])
    return kb, src, dst


def _block_kernel(w, planes):
    k, o = w.shape[0], w.shape[3]
    if w.shape[2] != NUM_SLOTS * planes:
        raise ValueError(f"kernel expects {w.shape[2]} stack channels, input has {planes} planes")
    kb, src, dst = _block_map(k, planes, o)
    kern = np.zeros((kb, kb, NUM_SLOTS * planes, NUM_SLOTS * o))
    kern[dst] = w[src]
    return kern


def mosaic_conv_forward(r, w, b=None):
    out = _from_blocks(conv2d_forward(_to_blocks(r), _block_kernel(w, r.shape[3])), w.shape[3])
    if b is not None:
        out += b
    return out


def mosaic_conv_backward(gy, r, w, need_input=True):
    """Gradients of :func:`mosaic_conv_forward`: ``(gr, gw, gb)``."""
    if r is None:
        raise ValueError("backward needs the saved forward input")
    planes, o = r.shape[3], w.shape[3]
    gblk, gkern, _ = conv2d_backward(_to_blocks(gy), _to_blocks(r),
                                     _block_kernel(w, planes), need_input)
    _, src, dst = _block_map(w.shape[0], planes, o)
    gw = np.zeros_like(w)
    np.add.at(gw, src, gkern[dst])
    gr = _from_blocks(gblk, planes) if need_input else None
    return gr, gw, gy.sum(axis=(0, 1, 2))


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(gy, y):
    # y > 0 exactly where the input was > 0; derivative at 0 is 0.
    return gy * (y > 0)


def maxpool2_forward(x):
    """2x2 max pooling; returns ``(y, argmax)`` for the backward pass."""
    n, h, wd, c = x.shape
    if h % 2 or wd % 2:
        raise ValueError("maxpool2 needs even spatial dimensions")
    blocks = x.reshape(n, h // 2, 2, wd // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, h // 2, wd // 2, c, 4)
    idx = blocks.argmax(axis=-1)
    y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return y, idx


def maxpool2_backward(gy, idx):
    n, h2, w2, c = gy.shape
    g = np.zeros((n, h2, w2, c, 4))
    np.put_along_axis(g, idx[..., None], gy[..., None], axis=-1)
    g = g.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return g.reshape(n, 2 * h2, 2 * w2, c)


def upsample2_forward(x):
    """Nearest-neighbour 2x upsampling."""
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2_backward(gy):
    n, h, wd, c = gy.shape
    return gy.reshape(n, h // 2, 2, wd // 2, 2, c).sum(axis=(2, 4))


def upconv2_forward(x, w, b=None):
    """Stride-2 transposed 2x2 convolution; ``w`` is ``(2, 2, C_in, C_out)``."""
    n, h, wd, _ = x.shape
    y = np.einsum("nhwc,abco->nhawbo", x, w).reshape(n, 2 * h, 2 * wd, w.shape[3])
    if b is not None:
        y += b
    return y


def upconv2_backward(gy, x, w):
    n, h, wd, _ = x.shape
    g = gy.reshape(n, h, 2, wd, 2, w.shape[3])
    gx = np.einsum("nhawbo,abco->nhwc", g, w)
    gw = np.einsum("nhwc,nhawbo->abco", x, g)
    return gx, gw, gy.sum(axis=(0, 1, 2))


def concat_forward(a, b):
    if a.shape[:3] != b.shape[:3]:
        raise ValueError(f"cannot concatenate {a.shape} and {b.shape}")
    return np.concatenate([a, b], axis=3)


def concat_backward(g, split):
    return g[..., :split], g[..., split:]
