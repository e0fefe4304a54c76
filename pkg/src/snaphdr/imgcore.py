"""Image containers, the multi-exposure CFA pattern, and small lattice helpers.

Images are plain float64 numpy arrays laid out ``(H, W, C)``.  A single
channel RAW mosaic may also be passed as ``(H, W)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

COLORS = "RGB"
PERIOD = 4
NUM_SLOTS = PERIOD * PERIOD

# Bayer cells (G R / B G) carrying exposures 0 1 / 1 2.
DEFAULT_PATTERN_SPEC = (
    "G0 R0 G1 R1 "
    "B0 G0 B1 G1 "
    "G1 R1 G2 R2 "
    "B1 G1 B2 G2"
)


@dataclass(frozen=True)
class MosaicPattern:
    """4x4 grid of (color, exposure) pairs, tiled with period 4.

    ``colors`` holds 0/1/2 for R/G/B, ``exposures`` the exposure index.
    Slot ``s`` is grid position ``(s // 4, s % 4)``.
    """

    colors: tuple[tuple[int, ...], ...]
    exposures: tuple[tuple[int, ...], ...]

    @property
    def num_exposures(self) -> int:
        return max(max(row) for row in self.exposures) + 1

    def slot(self, row: int, col: int) -> int:
        return (row % PERIOD) * PERIOD + (col % PERIOD)

    def slot_color(self, s: int) -> int:
        return self.colors[s // PERIOD][s % PERIOD]

    def slot_exposure(self, s: int) -> int:
        return self.exposures[s // PERIOD][s % PERIOD]

    def slots_for(self, color: int, exposure: int) -> list[int]:
        return [s for s in range(NUM_SLOTS)
                if self.slot_color(s) == color and self.slot_exposure(s) == exposure]

    def color_map(self, height: int, width: int) -> np.ndarray:
        return _tile(np.array(self.colors), height, width)

    def exposure_map(self, height: int, width: int) -> np.ndarray:
        return _tile(np.array(self.exposures), height, width)

    def slot_map(self, height: int, width: int) -> np.ndarray:
        return _tile(np.arange(NUM_SLOTS).reshape(PERIOD, PERIOD), height, width)

    def to_spec(self) -> str:
        return " ".join(f"{COLORS[self.colors[r][c]]}{self.exposures[r][c]}"
                        for r in range(PERIOD) for c in range(PERIOD))


def _tile(cell: np.ndarray, height: int, width: int) -> np.ndarray:
    reps = (-(-height // PERIOD), -(-width // PERIOD))
    return np.tile(cell, reps)[:height, :width]


def parse_pattern(spec: str) -> MosaicPattern:
    """Parse 16 whitespace-separated tokens such as ``"G0 R0 G1 ..."``.

    ``"default"`` selects :data:`DEFAULT_PATTERN_SPEC`.
    """
    if spec.strip().lower() == "default":
        spec = DEFAULT_PATTERN_SPEC
    tokens = spec.split()
    if len(tokens) != NUM_SLOTS:
        raise ValueError(f"expected 16 entries, got {len(tokens)}")
    colors, exposures = [], []
    for tok in tokens:
        if len(tok) != 2 or tok[0].upper() not in COLORS or tok[1] not in "012":
            raise ValueError(f"malformed token {tok!r}")
        colors.append(COLORS.index(tok[0].upper()))
        exposures.append(int(tok[1]))
    for ci, name in enumerate(COLORS):
        if ci not in colors:
            raise ValueError(f"missing color {name}")
    used = sorted(set(exposures))
    if used != list(range(len(used))):
        raise ValueError(f"exposure indices must be contiguous from 0, got {used}")
    rows = lambda v: tuple(tuple(v[r * PERIOD:(r + 1) * PERIOD]) for r in range(PERIOD))
    return MosaicPattern(rows(colors), rows(exposures))


DEFAULT_PATTERN = parse_pattern(DEFAULT_PATTERN_SPEC)


@dataclass(frozen=True)
class ExposureSpec:
    """Attenuation factor per exposure level and the shared exposure time."""

    rho: tuple[float, ...] = (1.0, 4.0, 16.0)
    delta_t: float = 1.0

    def __post_init__(self):
        rho = tuple(float(r) for r in self.rho)
        object.__setattr__(self, "rho", rho)
        if not rho or any(r <= 0 for r in rho):
            raise ValueError("attenuation factors must be positive")
        if any(b <= a for a, b in zip(rho, rho[1:])):
            raise ValueError("attenuation factors must be strictly increasing")
        if self.delta_t <= 0:
            raise ValueError("exposure time must be positive")


@dataclass
class SparseStack:
    """Sub-mosaicked RAW: one channel per pattern slot, zeros off-lattice."""

    planes: np.ndarray  # (H, W, 16)
    mask: np.ndarray    # (H, W, 16) bool


def _as_single(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 3:
        if raw.shape[2] != 1:
            raise ValueError("expected a single-channel plane")
        raw = raw[:, :, 0]
    return raw


def submosaic(raw: np.ndarray, pattern: MosaicPattern = DEFAULT_PATTERN) -> SparseStack:
    raw = _as_single(raw)
    h, w = raw.shape
    if h < PERIOD or w < PERIOD:
        raise ValueError("raw plane must be at least 4x4")
    slots = pattern.slot_map(h, w)
    mask = slots[:, :, None] == np.arange(NUM_SLOTS)
    return SparseStack(np.where(mask, raw[:, :, None], 0.0), mask)


def flatten(stack: SparseStack) -> np.ndarray:
    """Collapse a sparse stack back to a single-channel ``(H, W)`` mosaic."""
    assert np.all(stack.mask.sum(axis=2) == 1), "mask must be one-hot per pixel"
    return stack.planes.sum(axis=2)


def _lerp_table(sites: np.ndarray, n: int):
    """Indices and weights for 1-D linear interpolation with edge clamp."""
    t = np.arange(n)
    j = np.clip(np.searchsorted(sites, t, side="right") - 1, 0, len(sites) - 1)
    j1 = np.minimum(j + 1, len(sites) - 1)
    span = (sites[j1] - sites[j]).astype(np.float64)
    wt = np.where(span > 0, (t - sites[j]) / np.where(span > 0, span, 1.0), 0.0)
    return j, j1, np.clip(wt, 0.0, 1.0)


def interp_channel(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Separable bilinear interpolation of one channel sampled on a lattice."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise ValueError("empty mask channel")
    lattice = np.zeros_like(mask, dtype=bool)
    lattice[np.ix_(rows, cols)] = True
    if not np.array_equal(lattice, mask.astype(bool)):
        raise ValueError("sampled sites do not form a rectangular lattice")
    grid = values[np.ix_(rows, cols)]
    c0, c1, cw = _lerp_table(cols, mask.shape[1])
    across = grid[:, c0] * (1.0 - cw) + grid[:, c1] * cw
    r0, r1, rw = _lerp_table(rows, mask.shape[0])
    return across[r0] * (1.0 - rw)[:, None] + across[r1] * rw[:, None]


def interp_sparse(data: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fill every channel of ``data`` from its sampled sites (``mask``)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        return interp_channel(data, np.asarray(mask, dtype=bool))
    out = np.empty_like(data)
    for c in range(data.shape[2]):
        out[:, :, c] = interp_channel(data[:, :, c], mask[:, :, c])
    return out


def interp_stack(stack: SparseStack) -> np.ndarray:
    """h(x): dense 16-channel interpolation of a sub-mosaicked stack."""
    return interp_sparse(stack.planes, stack.mask)


def forward_diff(a: np.ndarray, axis: int) -> np.ndarray:
    """Forward difference along ``axis``; the trailing slice is zero."""
    a = np.asarray(a)
    out = np.zeros_like(a)
    n = a.shape[axis]
    head = [slice(None)] * a.ndim
    head[axis] = slice(0, n - 1)
    tail = list(head)
    tail[axis] = slice(1, n)
    out[tuple(head)] = a[tuple(tail)] - a[tuple(head)]
    return out


def forward_diff_adjoint(g: np.ndarray, axis: int) -> np.ndarray:
    """Transpose of :func:`forward_diff`."""
    g = np.moveaxis(np.asarray(g), axis, 0)
    out = np.zeros_like(g)
    n = g.shape[0]
    out[:n - 1] -= g[:n - 1]
    out[1:] += g[:n - 1]
    return np.moveaxis(out, 0, axis)


def gradient(img: np.ndarray):
    """Horizontal and vertical forward differences of an (H, W[, C]) image."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError("gradient needs at least a 2x2 image")
    return forward_diff(img, 1), forward_diff(img, 0)


TRANSFORMS = ("flipH", "flipV", "transpose")


def augment(img: np.ndarray, transform: str) -> np.ndarray:
    if transform == "flipH":
        return img[:, ::-1].copy()
    if transform == "flipV":
        return img[::-1].copy()
    if transform == "transpose":
        return np.swapaxes(img, 0, 1).copy()
    raise ValueError(f"unknown transform {transform!r}")


# All 8 combinations of the three transforms, applied in TRANSFORMS order.
AUGMENTATIONS = tuple(product((False, True), repeat=3))


def apply_augmentation(img: np.ndarray, flags) -> np.ndarray:
    for name, on in zip(TRANSFORMS, flags):
        if on:
            img = augment(img, name)
    return img


def exposure_images(dense: np.ndarray, pattern: MosaicPattern = DEFAULT_PATTERN) -> np.ndarray:
    """Average interpolated slots into one RGB image per exposure.

    ``dense`` is a ``(..., H, W, 16)`` slot interpolation; the result is
    ``(..., H, W, 3K)`` with exposure k in channels ``3k:3k+3``.
    """
    out = []
    for k in range(pattern.num_exposures):
        for c in range(3):
            slots = pattern.slots_for(c, k)
            if not slots:
                raise ValueError(f"pattern has no {COLORS[c]} samples at exposure {k}")
            out.append(dense[..., slots].mean(axis=-1))
    return np.stack(out, axis=-1)
