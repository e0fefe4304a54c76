"""Procedural HDR test scenes with several decades of radiance."""

from __future__ import annotations

import numpy as np


def _smooth_noise(rng, h, w, cells):
    coarse = rng.random((cells + 1, cells + 1))
    ys = np.linspace(0, cells, h)
    xs = np.linspace(0, cells, w)
    y0 = np.minimum(ys.astype(int), cells - 1)
    x0 = np.minimum(xs.astype(int), cells - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    c = coarse
    top = c[y0][:, x0] * (1 - fx) + c[y0][:, x0 + 1] * fx
    bot = c[y0 + 1][:, x0] * (1 - fx) + c[y0 + 1][:, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def _texture(rng, yy, xx):
    kind = rng.integers(4)
    theta = rng.uniform(0, np.pi)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    period = rng.uniform(3.0, 12.0)
    if kind == 0:
        t = 0.5 + 0.5 * np.sin(2 * np.pi * u / period)
    elif kind == 1:
        t = (np.floor(u / period * 2) % 2).astype(float)
    elif kind == 2:
        v = -xx * np.sin(theta) + yy * np.cos(theta)
        t = ((np.floor(u / period) + np.floor(v / period)) % 2).astype(float)
    else:
        t = _smooth_noise(rng, *yy.shape, cells=int(rng.integers(4, 12)))
    lo = rng.uniform(0.1, 0.6)
    return lo + (1 - lo) * t


def generate_scene(rng: np.random.Generator, size: int = 64, decades: float = 3.5) -> np.ndarray:
    """One ``(size, size, 3)`` radiance map.

    Log illumination (a tilted plane, glowing blobs and hard-edged patches)
    is stretched to span ``decades`` orders of magnitude, then modulated by
    textured, tinted reflectance regions.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    theta = rng.uniform(0, 2 * np.pi)
    log_illum = (xx * np.cos(theta) + yy * np.sin(theta)) / size
    for _ in range(rng.integers(1, 4)):
        cy, cx = rng.uniform(0, size, 2)
        r = rng.uniform(min(3.0, size / 6), size / 3)
        log_illum += rng.uniform(0.5, 2.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
    for _ in range(rng.integers(1, 4)):
        y0, x0 = rng.integers(0, max(size - 8, 1), 2)
        hgt, wid = rng.integers(min(6, size // 4), max(size // 2, 2), 2)
        log_illum[y0:y0 + hgt, x0:x0 + wid] += rng.uniform(-1.5, 1.5)
    log_illum -= log_illum.min()
    log_illum *= decades / max(log_illum.max(), 1e-12)
    illum = 10.0 ** (log_illum - decades)

    refl = np.empty((size, size, 3))
    labels = np.zeros((size, size), dtype=int)
    for k in range(1, rng.integers(3, 6)):
        cy, cx = rng.uniform(0, size, 2)
        ry, rx = rng.uniform(min(6.0, size / 4), size / 2, 2)
        labels[((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1] = k
    for k in np.unique(labels):
        sel = labels == k
        tint = rng.uniform(0.3, 1.0, 3)
        tint /= tint.max()
        refl[sel] = _texture(rng, yy, xx)[sel][:, None] * tint
    return illum[:, :, None] * refl


def generate_dataset(n: int, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [generate_scene(rng, size) for _ in range(n)]
