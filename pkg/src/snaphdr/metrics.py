"""Image quality metrics for linear HDR reconstructions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

TABLE_CAP_DB = 99.0


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return pred, truth


def cpsnr(pred, truth, peak: float = 1.0) -> float:
    """PSNR with the MSE pooled over pixels and channels; ``inf`` when identical."""
    pred, truth = _pair(pred, truth)
    mse = float(np.mean((pred - truth) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gtonemap(x, mu: float = 5000.0):
    """mu-law compression ``log(1 + mu x) / log(1 + mu)``."""
    return np.log1p(mu * np.asarray(x, dtype=np.float64)) / math.log1p(mu)


def gcpsnr(pred, truth, mu: float = 5000.0) -> float:
    """CPSNR after the global tone map; predictions are clipped to [0, 1] first."""
    pred, truth = _pair(pred, truth)
    return cpsnr(gtonemap(np.clip(pred, 0.0, 1.0), mu), gtonemap(truth, mu))


def ln_mse(pred, truth, epsilon_l: float = 1e-6) -> float:
    """MSE of errors divided by the true per-pixel max-over-RGB luminance."""
    pred, truth = _pair(pred, truth)
    lum = np.maximum(truth.max(axis=-1, keepdims=True), epsilon_l)
    return float(np.mean(((pred - truth) / lum) ** 2))


def error_pixel_ratio(pred, truth, thresholds) -> list[tuple[float, float]]:
    """Fraction of pixels whose mean squared RGB error exceeds each threshold."""
    pred, truth = _pair(pred, truth)
    thresholds = [float(t) for t in thresholds]
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    err = np.mean((pred - truth) ** 2, axis=-1).ravel()
    return [(t, float(np.count_nonzero(err > t)) / err.size) for t in thresholds]


DEFAULT_THRESHOLDS = tuple(10.0 ** e for e in np.arange(-8.0, -1.75, 0.25))


def capped(db: float) -> float:
    return min(db, TABLE_CAP_DB)


@dataclass
class EvalReport:
    cpsnr: float
    gcpsnr: float
    lnmse: float
    error_ratio_curve: list[tuple[float, float]] = field(default_factory=list)

    def rows(self):
        return [("cpsnr_db", capped(self.cpsnr)), ("gcpsnr_db", capped(self.gcpsnr)),
                ("ln_mse", self.lnmse)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "value"])
            for name, val in self.rows():
                w.writerow([name, repr(float(val))])

    def write_curve_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "ratio"])
            for t, r in self.error_ratio_curve:
                w.writerow([repr(t), repr(r)])

    def table(self) -> str:
        lines = [f"{'metric':<10} {'value':>14}", "-" * 25]
        for name, val in self.rows():
            lines.append(f"{name:<10} {val:>14.6g}")
        return "\n".join(lines) + "\n"


def evaluate(pred, truth, thresholds=DEFAULT_THRESHOLDS, mu: float = 5000.0,
             epsilon_l: float = 1e-6) -> EvalReport:
    return EvalReport(cpsnr(pred, truth), gcpsnr(pred, truth, mu),
                      ln_mse(pred, truth, epsilon_l),
                      error_pixel_ratio(pred, truth, thresholds))
