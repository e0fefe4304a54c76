"""Squared-error losses with an image-gradient term.

Per sample the loss is ``||p - t||^2 + lam * ||grad p - grad t||^2`` summed
over every element; a leading batch axis is averaged.  Tensors are
``(N, H, W, C)`` or a single ``(H, W, C)`` image.
"""

from __future__ import annotations

import numpy as np

from ..imgcore import forward_diff, forward_diff_adjoint


def gradient_mse(pred, target, lam=1.0):
    """Return ``(loss, dloss/dpred)``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    batch = pred.shape[0] if pred.ndim == 4 else 1
    r = pred - target
    dx = forward_diff(r, -2)
    dy = forward_diff(r, -3)
    loss = (np.sum(r * r) + lam * (np.sum(dx * dx) + np.sum(dy * dy))) / batch
    grad = 2.0 * (r + lam * (forward_diff_adjoint(dx, -2) + forward_diff_adjoint(dy, -3))) / batch
    return float(loss), grad


def loss_ldr(pred, target, lam=1.0):
    """LDR interpolation loss over all K exposure images stacked on channels."""
    return gradient_mse(pred, target, lam)


def loss_ln(pred, target_ln, lam=1.0):
    """Loss in the luminance-normalized domain; targets are already E / L."""
    return gradient_mse(pred, target_ln, lam)


def loss_linear_hdr(pred, lum, target, lam=1.0):
    """Same loss on ``lum * pred`` against linear HDR ``target``.

    The network output keeps its luminance-normalized meaning; only the
    domain in which errors are measured changes.
    """
    loss, g = gradient_mse(lum * pred, target, lam)
    return loss, g * lum
