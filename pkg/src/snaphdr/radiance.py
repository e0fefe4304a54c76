"""Radiometric processing: irradiance conversion, O/U-pixel correction,
multi-exposure fusion and tentative luminance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgcore import (
    DEFAULT_PATTERN,
    NUM_SLOTS,
    ExposureSpec,
    MosaicPattern,
    interp_channel,
    submosaic,
)

OVER_LEVEL = 0.995
UNDER_LEVEL = 0.005


def to_irradiance(x, rho: float, delta_t: float = 1.0):
    if rho <= 0 or delta_t <= 0:
        raise ValueError("rho and delta_t must be positive")
    return np.asarray(x, dtype=np.float64) / (rho * delta_t)


def ou_thresholds(rho: float, delta_t: float = 1.0) -> tuple[float, float]:
    """(over, under) irradiance thresholds for one exposure level."""
    return OVER_LEVEL / (rho * delta_t), UNDER_LEVEL / (rho * delta_t)


@dataclass
class IrradianceStack:
    """Sparse irradiance in sub-mosaic layout.

    ``clamped`` marks saturated samples of the lowest exposure and blacked-out
    samples of the highest exposure; they have no neighbour level to borrow
    from and are pinned to their threshold.
    """

    planes: np.ndarray            # (H, W, 16)
    mask: np.ndarray              # (H, W, 16) bool
    pattern: MosaicPattern
    corrected: tuple[bool, ...]
    clamped: np.ndarray | None = None

    def flat(self) -> np.ndarray:
        return self.planes.sum(axis=2)


def irradiance_stack(raw, spec: ExposureSpec = ExposureSpec(),
                     pattern: MosaicPattern = DEFAULT_PATTERN) -> IrradianceStack:
    """Convert an ME-CFA RAW mosaic to sparse sensor irradiance."""
    if len(spec.rho) != pattern.num_exposures:
        raise ValueError("exposure spec and pattern disagree on the number of levels")
    stack = submosaic(raw, pattern)
    scale = np.array([spec.rho[pattern.slot_exposure(s)] for s in range(NUM_SLOTS)])
    planes = to_irradiance(stack.planes, 1.0, spec.delta_t) / scale
    return IrradianceStack(planes, stack.mask, pattern,
                           (False,) * pattern.num_exposures)


def _borrow(planes, mask, pattern, color, level):
    slots = pattern.slots_for(color, level)
    if not slots:
        raise ValueError(f"exposure level {level} has no samples of color {color}")
    return np.mean([interp_channel(planes[:, :, s], mask[:, :, s]) for s in slots], axis=0)


def ou_correct(stack: IrradianceStack, spec: ExposureSpec = ExposureSpec()) -> IrradianceStack:
    """Replace over/under-exposed samples by interpolated neighbour-level irradiance.

    Over-exposed samples at level k take the interpolated, already corrected
    level k-1 (processed from low to high exposure).  Under-exposed samples at
    level k take level k+1, processed from high to low.  O/U status is decided
    on the incoming values so a sample is replaced at most once.
    """
    if all(stack.corrected):
        return stack
    if any(stack.corrected):
        raise ValueError("stack is partially corrected")
    pattern = stack.pattern
    levels = pattern.num_exposures
    orig = stack.planes
    planes = orig.copy()
    mask = stack.mask
    clamped = np.zeros(mask.shape[:2], dtype=bool)
    tau = [ou_thresholds(r, spec.delta_t) for r in spec.rho]

    def fix(level, bad_of, neighbour, pin):
        for s in range(NUM_SLOTS):
            if pattern.slot_exposure(s) != level:
                continue
            bad = mask[:, :, s] & bad_of(orig[:, :, s], tau[level])
            if not bad.any():
                continue
            if neighbour is None:
                planes[:, :, s][bad] = pin(tau[level])
                clamped[bad] = True
            else:
                dense = _borrow(planes, mask, pattern, pattern.slot_color(s), neighbour)
                planes[:, :, s][bad] = dense[bad]

    for k in range(levels):
        fix(k, lambda v, t: v > t[0], k - 1 if k > 0 else None, lambda t: t[0])
    for k in reversed(range(levels)):
        fix(k, lambda v, t: v < t[1], k + 1 if k < levels - 1 else None, lambda t: t[1])
    return IrradianceStack(planes, mask, pattern, (True,) * levels, clamped)


@dataclass(frozen=True)
class WeightFn:
    """Fusion weight on LDR values in [0, 1]: ``hat`` or ``trapezoid``."""

    kind: str = "hat"
    ramp: float = 0.1

    def __call__(self, z):
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "hat":
            w = np.minimum(z, 1.0 - z)
        elif self.kind == "trapezoid":
            w = np.minimum(1.0, np.minimum(z, 1.0 - z) / self.ramp)
        else:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        return np.clip(w, 0.0, None)


def fuse_estimates(z, est, weight: WeightFn = WeightFn()) -> np.ndarray:
    """Average per-exposure estimates ``est`` with weights taken from LDR values ``z``.

    Both are ``(..., K, 3)``. Pixels whose weights all vanish take the
    estimate from the exposure whose value lies nearest 0.5 (lowest exposure
    on ties).
    """
    w = weight(z)
    wsum = w.sum(axis=-2)
    merged = (w * est).sum(axis=-2) / np.where(wsum > 0, wsum, 1.0)
    pick = np.abs(z - 0.5).argmin(axis=-2)
    fallback = np.take_along_axis(est, pick[..., None, :], axis=-2)[..., 0, :]
    return np.where(wsum > 0, merged, fallback)


def debevec_merge(ldr: np.ndarray, spec: ExposureSpec = ExposureSpec(),
                  weight: WeightFn = WeightFn()) -> np.ndarray:
    """Weighted fusion of K linear LDR images ``(..., 3K)`` into ``(..., 3)``."""
    ldr = np.asarray(ldr, dtype=np.float64)
    k = len(spec.rho)
    if ldr.shape[-1] != 3 * k:
        raise ValueError(f"expected {3 * k} channels, got {ldr.shape[-1]}")
    z = ldr.reshape(ldr.shape[:-1] + (k, 3))
    rho = np.asarray(spec.rho)[:, None] * spec.delta_t
    return fuse_estimates(z, z / rho, weight)


def tentative_luminance(hdr: np.ndarray) -> np.ndarray:
    """Pixelwise max over RGB, kept as a trailing singleton channel."""
    return np.asarray(hdr, dtype=np.float64).max(axis=-1, keepdims=True)
