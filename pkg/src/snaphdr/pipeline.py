"""Two-stage reconstruction: LDR interpolation, tentative luminance,
luminance-normalized HDR regression."""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .autonet import AdamState, UNet, UNetConfig, adam_step, gradient_mse, loss_linear_hdr
from .imgcore import (
    AUGMENTATIONS,
    PERIOD,
    apply_augmentation,
    exposure_images,
    interp_stack,
    submosaic,
)
from .radiance import (
    debevec_merge,
    irradiance_stack,
    ou_correct,
    tentative_luminance,
)
from .sim import SimConfig, simulate_mecfa

LOSS_DOMAINS = ("ln", "linear")

# Half an 8-bit code at the longest default exposure (1/16). A pixel whose
# predicted exposures all round to black is at most this bright; smaller
# floors let a handful of such pixels blow up E/L and dominate the loss.
LUMINANCE_FLOOR = 0.5 / (255 * 16)


@dataclass(frozen=True)
class TrainConfig:
    patch_size: int = 32
    batch_size: int = 32
    iterations: int = 3000
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    augment: bool = True
    epsilon_l: float = LUMINANCE_FLOOR
    grad_weight: float = 1.0
    depth: int = 5
    base_channels: int = 32
    adapt_channels: int = 0
    upsample: str = "nearest"
    loss_domain: str = "ln"
    threads: int = 1
    residual: bool = True

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if min(self.patch_size, self.batch_size, self.iterations, self.depth,
               self.base_channels, self.threads) < 1:
            raise ValueError("counts must be positive")
        step = max(PERIOD, 2 ** (self.depth - 1))
        if self.patch_size % step:
            raise ValueError(f"patch size must be divisible by {step}")
        if self.lr <= 0 or self.epsilon_l <= 0:
            raise ValueError("lr and epsilon_l must be positive")
        if self.loss_domain not in LOSS_DOMAINS:
            raise ValueError(f"loss domain must be one of {LOSS_DOMAINS}")

    def unet(self, sparse_planes: int, dense_channels: int, out_channels: int) -> UNetConfig:
        return UNetConfig(depth=self.depth, base_channels=self.base_channels,
                          sparse_planes=sparse_planes, dense_channels=dense_channels,
                          out_channels=out_channels, adapt_channels=self.adapt_channels,
                          upsample=self.upsample)

    def to_dict(self) -> dict:
        return asdict(self)


def seed_from_env(cfg: TrainConfig) -> TrainConfig:
    """Honor ``SNAPHDR_SEED`` when set."""
    raw = os.environ.get("SNAPHDR_SEED")
    if raw is None or raw.strip() == "":
        return cfg
    return TrainConfig(**{**cfg.to_dict(), "seed": int(raw)})


@dataclass
class Sample:
    raw: np.ndarray     # (H, W)
    ldr: np.ndarray     # (H, W, 3K)
    hdr: np.ndarray     # (H, W, 3), normalized ground truth


def prepare_dataset(hdrs, sim_cfg: SimConfig = SimConfig(), augment: bool = True) -> list[Sample]:
    """Simulate every scene, once per augmentation when ``augment`` is set.

    Scenes are flipped/transposed before simulation so the mosaic stays
    anchored to the sensor grid.
    """
    variants = AUGMENTATIONS if augment else AUGMENTATIONS[:1]
    out = []
    for hdr in hdrs:
        for flags in variants:
            raw, ldr, norm = simulate_mecfa(apply_augmentation(np.asarray(hdr), flags), sim_cfg)
            out.append(Sample(raw, ldr, norm))
    return out


# -- network inputs ---------------------------------------------------------

def ldr_features(raw, sim_cfg: SimConfig = SimConfig()):
    """Branch inputs of the LDR network: raw plane and its interpolation h(x)."""
    raw = np.asarray(raw, dtype=np.float64)
    return raw[:, :, None], interp_stack(submosaic(raw, sim_cfg.pattern))


def ldr_prior(dense, sim_cfg: SimConfig = SimConfig()) -> np.ndarray:
    """Exposure images straight from the interpolated slots: ``(..., H, W, 3K)``."""
    return exposure_images(dense, sim_cfg.pattern)


PRIORS = {"ldr": ldr_prior, "ln": None}


class ResidualNet:
    """A U-Net whose output is added to a fixed estimate.

    The LDR network derives its estimate from the dense input. The LN network
    has to be handed one: the stage-1 HDR divided by the tentative luminance.
    Exposes the wrapped network's ``params`` and ``cfg`` so it trains and
    checkpoints like a bare ``UNet``.
    """

    def __init__(self, net: UNet, kind: str, sim_cfg: SimConfig = SimConfig()):
        if kind not in PRIORS:
            raise ValueError(f"unknown prior {kind!r}")
        self.net, self.kind, self.sim_cfg = net, kind, sim_cfg

    @property
    def params(self):
        return self.net.params

    @property
    def cfg(self):
        return self.net.cfg

    def forward(self, sparse, dense, base=None):
        if base is None:
            if PRIORS[self.kind] is None:
                raise ValueError(f"{self.kind} network needs an explicit base estimate")
            base = PRIORS[self.kind](dense, self.sim_cfg)
        return self.net.forward(sparse, dense) + base

    def backward(self, gout):
        return self.net.backward(gout)


def wrap_network(net: UNet, kind: str, residual: bool, sim_cfg: SimConfig = SimConfig()):
    return ResidualNet(net, kind, sim_cfg) if residual else net


def _new_network(cfg: TrainConfig, kind: str, sim_cfg: SimConfig, *channels):
    net = UNet(cfg.unet(*channels), seed=cfg.seed)
    if cfg.residual:
        # Start exactly at the prior.
        net.params["head.w"][...] = 0.0
    return wrap_network(net, kind, cfg.residual, sim_cfg)


def _batched(a):
    return a[None] if a.ndim == 3 else a


def predict_ldr(raw, net: UNet, sim_cfg: SimConfig = SimConfig()) -> np.ndarray:
    sparse, dense = ldr_features(raw, sim_cfg)
    return net.forward(sparse[None], dense[None])[0]


def estimate_luminance(raw, net: UNet, sim_cfg: SimConfig = SimConfig(),
                       epsilon_l: float = LUMINANCE_FLOOR):
    """Return ``(lum (H, W, 1), ldr_pred (H, W, 3K))``.

    Predicted exposures are clipped to [0, 1] before merging.
    """
    ldr_pred = predict_ldr(raw, net, sim_cfg)
    return np.maximum(tentative_luminance(merge_prediction(ldr_pred, sim_cfg)), epsilon_l), ldr_pred


def merge_prediction(ldr_pred, sim_cfg: SimConfig = SimConfig()) -> np.ndarray:
    return debevec_merge(np.clip(ldr_pred, 0.0, 1.0), sim_cfg.exposure_spec())


@dataclass
class LnInput:
    x: np.ndarray       # (H, W) raw mosaic
    hx: np.ndarray      # (H, W, 16)
    xi_n: np.ndarray    # (H, W) corrected irradiance mosaic / L
    hxi_n: np.ndarray   # (H, W, 16)
    base: np.ndarray | None = None  # (H, W, 3) stage-1 HDR / L

    def sparse(self) -> np.ndarray:
        return np.stack([self.x, self.xi_n], axis=2)

    def dense(self) -> np.ndarray:
        return np.concatenate([self.hx, self.hxi_n], axis=2)

    def stacked(self, sim_cfg: SimConfig = SimConfig()) -> np.ndarray:
        """Explicit 64-channel sub-mosaic layout ``[x, h(x), xi/L, h(xi)/L]``."""
        p = sim_cfg.pattern
        return np.concatenate([submosaic(self.x, p).planes, self.hx,
                               submosaic(self.xi_n, p).planes, self.hxi_n], axis=2)


def build_ln_input(raw, lum, sim_cfg: SimConfig = SimConfig(), tentative=None) -> LnInput:
    raw = np.asarray(raw, dtype=np.float64)
    lum = np.asarray(lum, dtype=np.float64)
    if lum.ndim == 3:
        lum = lum[:, :, 0]
    if lum.shape != raw.shape:
        raise ValueError(f"luminance {lum.shape} does not match raw {raw.shape}")
    if not np.all(lum > 0):
        raise ValueError("luminance must be strictly positive")
    stack = ou_correct(irradiance_stack(raw, sim_cfg.exposure_spec(), sim_cfg.pattern),
                       sim_cfg.exposure_spec())
    hxi = interp_stack(stack)
    _, hx = ldr_features(raw, sim_cfg)
    base = None if tentative is None else np.asarray(tentative, dtype=np.float64) / lum[:, :, None]
    return LnInput(raw, hx, stack.flat() / lum, hxi / lum[:, :, None], base)


# -- training ---------------------------------------------------------------

def sample_patches(rng: np.random.Generator, shapes, batch: int, size: int):
    """Draw ``(item, top, left)`` triples; corners sit on the 4-pixel mosaic grid."""
    shapes = list(shapes)
    if not shapes:
        raise ValueError("empty dataset")
    if any(h < size or w < size for h, w in shapes):
        raise ValueError(f"patch size {size} exceeds an image")
    items = rng.integers(len(shapes), size=batch)
    tops, lefts = [], []
    for i in items:
        h, w = shapes[i]
        tops.append(PERIOD * rng.integers((h - size) // PERIOD + 1))
        lefts.append(PERIOD * rng.integers((w - size) // PERIOD + 1))
    return items, np.array(tops), np.array(lefts)


def _crop_batch(arrays, items, tops, lefts, size):
    return np.stack([arrays[i][t:t + size, l:l + size] for i, t, l in zip(items, tops, lefts)])


@dataclass
class TrainResult:
    net: UNet
    trace: list[float] = field(default_factory=list)
    seconds: float = 0.0


def _fit(net: UNet, fields, loss_fn, cfg: TrainConfig, log=None, inputs=2) -> TrainResult:
    """Adam over random patches; ``fields`` are per-item lists of (H, W, C) arrays.

    The first ``inputs`` fields feed the network, the rest the loss.
    """
    if not fields[0]:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    state = AdamState(lr=cfg.lr, beta1=cfg.betas[0], beta2=cfg.betas[1])
    shapes = [a.shape[:2] for a in fields[0]]
    trace = []
    start = time.perf_counter()
    with threadpool_limits(cfg.threads):
        for it in range(cfg.iterations):
            items, tops, lefts = sample_patches(rng, shapes, cfg.batch_size, cfg.patch_size)
            batch = [_crop_batch(f, items, tops, lefts, cfg.patch_size) for f in fields]
            out = net.forward(*batch[:inputs])
            loss, g = loss_fn(out, *batch[inputs:])
            if not np.isfinite(loss):
                raise FloatingPointError(f"loss diverged at iteration {it}")
            adam_step(net.params, net.backward(g), state)
            trace.append(loss)
            if log is not None and (it % 100 == 0 or it == cfg.iterations - 1):
                log(it, loss)
    return TrainResult(net, trace, time.perf_counter() - start)


def train_ldr_i_net(dataset: list[Sample], cfg: TrainConfig = TrainConfig(),
                    sim_cfg: SimConfig = SimConfig(), log=None) -> TrainResult:
    """Fit the network mapping RAW to the full stack of LDR exposures."""
    if not dataset:
        raise ValueError("empty dataset")
    sparse, dense = zip(*(ldr_features(s.raw, sim_cfg) for s in dataset))
    targets = [s.ldr for s in dataset]
    net = _new_network(cfg, "ldr", sim_cfg, 1, dense[0].shape[2], targets[0].shape[2])
    return _fit(net, [list(sparse), list(dense), targets],
                lambda out, t: gradient_mse(out, t, cfg.grad_weight), cfg, log)


@dataclass
class LnExample:
    inp: LnInput
    lum: np.ndarray     # (H, W, 1)
    hdr: np.ndarray     # (H, W, 3)


def ln_examples(dataset: list[Sample], ldr_net: UNet, sim_cfg: SimConfig = SimConfig(),
                epsilon_l: float = LUMINANCE_FLOOR) -> list[LnExample]:
    """Stage-2 inputs from the frozen stage-1 network."""
    out = []
    for s in dataset:
        lum, pred = estimate_luminance(s.raw, ldr_net, sim_cfg, epsilon_l)
        inp = build_ln_input(s.raw, lum, sim_cfg, merge_prediction(pred, sim_cfg))
        out.append(LnExample(inp, lum, s.hdr))
    return out


def train_ln_net(dataset: list[Sample], ldr_net: UNet, cfg: TrainConfig = TrainConfig(),
                 sim_cfg: SimConfig = SimConfig(), log=None,
                 examples: list[LnExample] | None = None) -> TrainResult:
    """Fit the HDR network; ``cfg.loss_domain`` picks the normalized or linear loss."""
    if examples is None:
        if not dataset:
            raise ValueError("empty dataset")
        examples = ln_examples(dataset, ldr_net, sim_cfg, cfg.epsilon_l)
    inputs = [[e.inp.sparse() for e in examples], [e.inp.dense() for e in examples]]
    if cfg.residual:
        inputs.append([e.inp.base for e in examples])
    net = _new_network(cfg, "ln", sim_cfg, 2, inputs[1][0].shape[2], 3)
    if cfg.loss_domain == "ln":
        targets = [e.hdr / e.lum for e in examples]
        return _fit(net, inputs + [targets],
                    lambda out, t: gradient_mse(out, t, cfg.grad_weight), cfg, log, len(inputs))
    return _fit(net, inputs + [[e.lum for e in examples], [e.hdr for e in examples]],
                lambda out, lum, t: loss_linear_hdr(out, lum, t, cfg.grad_weight),
                cfg, log, len(inputs))


# -- inference --------------------------------------------------------------

def _pad_blocks(raw, step):
    """Mirror whole 4x4 blocks so the padded plane keeps the mosaic phase."""
    h, w = raw.shape
    if h % PERIOD or w % PERIOD:
        raise ValueError("raw dimensions must be multiples of 4")
    ph, pw = -h % step, -w % step
    if not ph and not pw:
        return raw
    blocks = raw.reshape(h // PERIOD, PERIOD, w // PERIOD, PERIOD)
    blocks = np.pad(blocks, ((0, ph // PERIOD), (0, 0), (0, pw // PERIOD), (0, 0)),
                    mode="symmetric")
    return blocks.reshape(h + ph, w + pw)


def reconstruct(raw, ldr_net: UNet, ln_net: UNet, sim_cfg: SimConfig = SimConfig(),
                epsilon_l: float = LUMINANCE_FLOOR) -> np.ndarray:
    """Final HDR estimate ``max(L * g, 0)``, shape ``(H, W, 3)``."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ValueError("expected a single-channel raw plane")
    h, w = raw.shape
    step = max(2 ** (ldr_net.cfg.depth - 1), 2 ** (ln_net.cfg.depth - 1), PERIOD)
    padded = _pad_blocks(raw, step)
    lum, pred = estimate_luminance(padded, ldr_net, sim_cfg, epsilon_l)
    inp = build_ln_input(padded, lum, sim_cfg, merge_prediction(pred, sim_cfg))
    args = [inp.sparse()[None], inp.dense()[None]]
    if isinstance(ln_net, ResidualNet):
        args.append(inp.base[None])
    g = ln_net.forward(*args)[0]
    out = np.maximum(lum * g, 0.0)[:h, :w]
    return np.nan_to_num(out, nan=0.0, posinf=0.0)


def ldr_net_merge(raw, ldr_net: UNet, sim_cfg: SimConfig = SimConfig()) -> np.ndarray:
    """Stage-1 only: merge the predicted exposures."""
    step = max(2 ** (ldr_net.cfg.depth - 1), PERIOD)
    raw = np.asarray(raw, dtype=np.float64)
    merged = merge_prediction(predict_ldr(_pad_blocks(raw, step), ldr_net, sim_cfg), sim_cfg)
    return merged[:raw.shape[0], :raw.shape[1]]


def baseline_reconstruct(raw, sim_cfg: SimConfig = SimConfig()) -> np.ndarray:
    """Bilinear interpolation of every slot followed by exposure fusion."""
    hx = interp_stack(submosaic(raw, sim_cfg.pattern))
    return debevec_merge(exposure_images(hx, sim_cfg.pattern), sim_cfg.exposure_spec())


# -- run records ------------------------------------------------------------

def write_loss_csv(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loss"])
        for i, loss in enumerate(trace):
            writer.writerow([i, repr(float(loss))])


def write_manifest(path, config: dict, trace, seconds: float | None = None) -> None:
    """Plain-text run record: config echo as JSON plus a loss summary."""
    lines = ["config " + json.dumps(config, sort_keys=True),
             f"seed {config.get('train', {}).get('seed', config.get('seed'))}",
             f"iterations {len(trace)}"]
    if trace:
        lines += [f"loss_first {trace[0]!r}", f"loss_last {trace[-1]!r}"]
    if seconds is not None:
        lines.append(f"seconds {seconds:.1f}")
    Path(path).write_text("\n".join(lines) + "\n")
