"""Quick built-in checks: layer gradients, radiometric oracles, LN identities."""

from __future__ import annotations

import numpy as np

from .autonet import UNet, UNetConfig, grad_check, grad_check_details, gradient_mse, loss_linear_hdr
from .autonet import layers as L
from .imgcore import NUM_SLOTS, interp_sparse, submosaic
from .radiance import debevec_merge, irradiance_stack, ou_correct
from .sim import SimConfig, expose

GRAD_TOL = 1e-4


def _check_layer(forward, backward, inputs, rng):
    """Grad-check ``sum(forward(*inputs) * probe)``; ``backward`` maps probe -> input grads."""
    y = forward(*inputs.values())
    probe = rng.normal(size=y.shape)
    grads = backward(probe)
    fn = lambda: float(np.sum(forward(*inputs.values()) * probe))
    return grad_check(fn, inputs, dict(zip(inputs, grads)))


def layer_grad_errors(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    out = {}
    x = rng.normal(size=(2, 6, 6, 3))
    w = rng.normal(size=(3, 3, 3, 4))
    b = rng.normal(size=4)
    ins = {"x": x, "w": w, "b": b}
    out["conv2d"] = _check_layer(L.conv2d_forward,
                                 lambda g: L.conv2d_backward(g, x, w), ins, rng)

    r = rng.random((1, 8, 8, 2))
    wm = rng.normal(size=(7, 7, NUM_SLOTS * 2, 3))
    bm = rng.normal(size=3)
    out["mosaic_conv"] = _check_layer(L.mosaic_conv_forward,
                                      lambda g: L.mosaic_conv_backward(g, r, wm),
                                      {"r": r, "w": wm, "b": bm}, rng)

    xr = rng.normal(size=(2, 4, 4, 3))
    xr[np.abs(xr) < 1e-2] = 0.5  # keep clear of the kink
    out["relu"] = _check_layer(L.relu_forward,
                               lambda g: (L.relu_backward(g, L.relu_forward(xr)),), {"x": xr}, rng)

    xp = rng.permutation(2 * 4 * 4 * 3).reshape(2, 4, 4, 3) * 0.01  # distinct: no ties
    out["maxpool2"] = _check_layer(lambda a: L.maxpool2_forward(a)[0],
                                   lambda g: (L.maxpool2_backward(g, L.maxpool2_forward(xp)[1]),),
                                   {"x": xp}, rng)

    xu = rng.normal(size=(2, 3, 3, 2))
    out["upsample2"] = _check_layer(L.upsample2_forward,
                                    lambda g: (L.upsample2_backward(g),), {"x": xu}, rng)

    wu = rng.normal(size=(2, 2, 2, 3))
    bu = rng.normal(size=3)
    out["upconv2"] = _check_layer(L.upconv2_forward,
                                  lambda g: L.upconv2_backward(g, xu, wu),
                                  {"x": xu, "w": wu, "b": bu}, rng)

    ca, cb = rng.normal(size=(1, 2, 2, 2)), rng.normal(size=(1, 2, 2, 3))
    out["concat"] = _check_layer(L.concat_forward,
                                 lambda g: L.concat_backward(g, 2), {"a": ca, "b": cb}, rng)

    pred, tgt = rng.normal(size=(2, 5, 5, 3)), rng.normal(size=(2, 5, 5, 3))
    _, g = gradient_mse(pred, tgt, 0.7)
    out["gradient_mse"] = grad_check(lambda: gradient_mse(pred, tgt, 0.7)[0], {"p": pred}, {"p": g})

    lum = rng.random((2, 5, 5, 1)) + 0.1
    _, g = loss_linear_hdr(pred, lum, tgt)
    out["loss_linear_hdr"] = grad_check(lambda: loss_linear_hdr(pred, lum, tgt)[0],
                                        {"p": pred}, {"p": g})
    return out


def unet_grad_check(seed: int = 0, max_coords: int | None = 40, upsample: str = "nearest"):
    """Depth-2 toy U-Net, parameters and both inputs."""
    rng = np.random.default_rng(seed)
    cfg = UNetConfig(depth=2, base_channels=4, sparse_planes=1, dense_channels=16,
                     out_channels=3, adapt_channels=4, upsample=upsample)
    net = UNet(cfg, seed=seed + 1)
    sp, de = rng.random((1, 8, 8, 1)), rng.random((1, 8, 8, 16))
    tgt = rng.random((1, 8, 8, 3))
    _, g = gradient_mse(net.forward(sp, de), tgt)
    grads, gs, gd = net.backward(g, input_grads=True)
    arrays = {**net.params, "sparse": sp, "dense": de}
    analytic = {**grads, "sparse": gs, "dense": gd}
    return grad_check_details(lambda: gradient_mse(net.forward(sp, de), tgt)[0], arrays, analytic,
                              max_coords=max_coords, seed=seed, signature=net.signature)


def radiometric_errors(seed: int = 0) -> dict[str, float]:
    """Worst violations of exact radiometric identities (0 means exact)."""
    rng = np.random.default_rng(seed)
    cfg = SimConfig()
    spec = cfg.exposure_spec()
    out = {}

    # Unclipped exposures: irradiance conversion is exact up to quantization.
    e = rng.uniform(0.01, 1.0 / 16.5, size=(8, 8, 3))
    worst = 0.0
    for rho in cfg.exposure_scales:
        err = np.abs(expose(e, rho, cfg.bit_depth) / rho - e)
        worst = max(worst, float((err - 0.5 / (255 * rho)).max()))
    out["irradiance_roundtrip_excess"] = max(worst, 0.0)

    # Unquantized mid-range stack: fusion returns E exactly.
    ldr = np.concatenate([e * r for r in cfg.exposure_scales], axis=2)
    out["debevec_exact"] = float(np.abs(debevec_merge(ldr, spec) - e).max())

    # Affine ramp clipped at the middle and highest exposures.
    yy, xx = np.mgrid[0:16, 0:16].astype(float)
    ramp = 0.02 + 0.004 * xx + 0.002 * yy
    raw = np.zeros((16, 16))
    stack = submosaic(raw, cfg.pattern)
    for s in range(NUM_SLOTS):
        rho = spec.rho[cfg.pattern.slot_exposure(s)]
        sel = stack.mask[:, :, s]
        raw[sel] = np.clip(ramp[sel] * rho, 0.0, 1.0)
    fixed = ou_correct(irradiance_stack(raw, spec, cfg.pattern), spec).flat()
    inner = (slice(4, 12), slice(4, 12))
    out["ou_affine_interior"] = float(np.abs(fixed[inner] - ramp[inner]).max())

    # Luminance-normalized identities.
    hdr = rng.random((4, 4, 3)) + 0.01
    lum = rng.random((4, 4, 1)) + 0.05
    out["ln_substitution"] = float(np.abs(lum * (hdr / lum) - hdr).max())
    g = rng.random((4, 4, 3))
    lhs = np.sum((g - hdr / lum) ** 2)
    rhs = np.sum(((lum * g - hdr) / lum) ** 2)
    out["ln_loss_identity"] = float(abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return out


def run(log=print) -> bool:
    """Run every check; returns True when all pass."""
    ok = True

    def report(name, value, tol):
        nonlocal ok
        good = value < tol
        ok &= good
        log(f"{'PASS' if good else 'FAIL'} {name}: {value:.3e} (< {tol:g})")

    for name, err in layer_grad_errors().items():
        report(f"grad {name}", err, GRAD_TOL)
    for mode in ("nearest", "transposed"):
        res = unet_grad_check(upsample=mode)
        report(f"grad unet depth-2 {mode} ({res.checked} coords)", res.max_rel_error, GRAD_TOL)
    for name, err in radiometric_errors().items():
        report(name, err, 1e-9)
    return ok
