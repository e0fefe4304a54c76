"""ME-CFA RAW simulation from ground-truth HDR images."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imgcore import DEFAULT_PATTERN, PERIOD, ExposureSpec, MosaicPattern


@dataclass(frozen=True)
class SimConfig:
    exposure_scales: tuple[float, ...] = (1.0, 4.0, 16.0)
    bit_depth: int = 8
    pattern: MosaicPattern = field(default=DEFAULT_PATTERN)

    def __post_init__(self):
        scales = tuple(float(s) for s in self.exposure_scales)
        object.__setattr__(self, "exposure_scales", scales)
        if any(s <= 0 for s in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError("exposure scales must be positive and strictly increasing")
        if not 1 <= self.bit_depth <= 16:
            raise ValueError("bit depth must lie in [1, 16]")
        if len(scales) != self.pattern.num_exposures:
            raise ValueError(
                f"pattern uses {self.pattern.num_exposures} exposures, "
                f"got {len(scales)} scales")

    def exposure_spec(self) -> ExposureSpec:
        # Attenuation factors are the simulation scales, so irradiance
        # conversion undoes exactly what exposure applied.
        return ExposureSpec(self.exposure_scales, 1.0)


def normalize_hdr(hdr: np.ndarray) -> np.ndarray:
    """Scale so the global maximum over pixels and channels is 1."""
    hdr = np.asarray(hdr, dtype=np.float64)
    if np.any(hdr < 0):
        raise ValueError("HDR values must be nonnegative")
    peak = hdr.max()
    if not peak > 0:
        raise ValueError("cannot normalize an all-zero image")
    return hdr / peak


def expose(hdr_norm, scale: float, bit_depth: int = 8):
    """Scale, clip to [0, 1] and quantize to ``2**bit_depth`` levels.

    Quantization rounds half up.
    """
    levels = float(2 ** bit_depth - 1)
    clipped = np.clip(np.asarray(hdr_norm, dtype=np.float64) * scale, 0.0, 1.0)
    return np.floor(clipped * levels + 0.5) / levels


def simulate_mecfa(hdr: np.ndarray, cfg: SimConfig = SimConfig()):
    """Return ``(raw, ldr_stack, hdr_norm)``.

    ``raw`` is ``(H, W)``; ``ldr_stack`` is ``(H, W, 3K)`` with exposure k in
    channels ``3k:3k+3``; ``hdr_norm`` is the normalized ground truth.
    """
    hdr = np.asarray(hdr, dtype=np.float64)
    if hdr.ndim != 3 or hdr.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) HDR image")
    h, w, _ = hdr.shape
    if h % PERIOD or w % PERIOD:
        raise ValueError("image dimensions must be multiples of 4")
    hdr_norm = normalize_hdr(hdr)
    ldr = np.concatenate([expose(hdr_norm, s, cfg.bit_depth) for s in cfg.exposure_scales],
                         axis=2)
    colors = cfg.pattern.color_map(h, w)
    exposures = cfg.pattern.exposure_map(h, w)
    raw = np.take_along_axis(ldr, (3 * exposures + colors)[:, :, None], axis=2)[:, :, 0]
    return raw, ldr, hdr_norm
