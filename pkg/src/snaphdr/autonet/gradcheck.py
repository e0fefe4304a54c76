"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int  # coordinates whose perturbation crossed a ReLU/pool kink


def grad_check_details(fn, arrays, analytic, h=1e-4, max_coords=None, seed=0,
                       signature=None) -> GradCheckResult:
    """Compare ``analytic`` against central differences of scalar ``fn()``.

    ``fn`` reads the (mutable) ``arrays`` dict.  With ``max_coords`` a random
    subset of coordinates per array is probed.  If ``signature`` is given it
    must return the activation pattern of the last ``fn`` call; coordinates
    where the pattern changes within +-h are non-differentiable there and
    are skipped.
    """
    rng = np.random.default_rng(seed)
    base_sig = None
    if signature is not None:
        fn()
        base_sig = signature()
    worst, checked, skipped = 0.0, 0, 0
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        ana = np.asarray(analytic[name]).reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = fn()
            sig_p = signature() if signature is not None else None
            flat[i] = orig - h
            fm = fn()
            sig_m = signature() if signature is not None else None
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm) and np.isfinite(ana[i])):
                raise FloatingPointError(f"non-finite value at {name}[{i}]")
            if signature is not None and not (sig_p == base_sig == sig_m):
                skipped += 1
                continue
            num = (fp - fm) / (2.0 * h)
            a = ana[i]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
            checked += 1
    return GradCheckResult(worst, checked, skipped)


def grad_check(fn, arrays, analytic, h=1e-4, **kw) -> float:
    """Max relative error between analytic and central-difference gradients."""
    return grad_check_details(fn, arrays, analytic, h=h, **kw).max_rel_error
