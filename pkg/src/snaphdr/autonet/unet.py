"""U-Net with RAW data adaptation blocks.

Input comes as two aligned branches: flat mosaic planes whose sub-mosaicked
stack feeds a 7x7 conv, and dense interpolated channels feeding a 3x3 conv.
Both branches pass a ReLU and are concatenated before the trunk.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..imgcore import NUM_SLOTS
from . import layers as L


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 5
    base_channels: int = 32
    sparse_planes: int = 1      # flat mosaic planes; stack channels = 16 per plane
    dense_channels: int = 16
    out_channels: int = 9
    kernel_size: int = 3
    sparse_kernel: int = 7
    dense_kernel: int = 3
    adapt_channels: int = 0     # per branch; 0 means base_channels
    upsample: str = "nearest"   # or "transposed"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if min(self.base_channels, self.sparse_planes, self.dense_channels,
               self.out_channels) < 1:
            raise ValueError("channel counts must be positive")
        if self.upsample not in ("nearest", "transposed"):
            raise ValueError(f"unknown upsample mode {self.upsample!r}")

    @property
    def in_channels(self) -> int:
        return NUM_SLOTS * self.sparse_planes + self.dense_channels

    @property
    def branch_channels(self) -> int:
        return self.adapt_channels or self.base_channels

    def width(self, level: int) -> int:
        return self.base_channels * 2 ** level

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(cfg: UNetConfig) -> dict[str, tuple[int, ...]]:
    """Ordered parameter shapes; the order fixes initialization draws."""
    k, a = cfg.kernel_size, cfg.branch_channels
    shapes = {
        "adapt.sparse.w": (cfg.sparse_kernel, cfg.sparse_kernel, NUM_SLOTS * cfg.sparse_planes, a),
        "adapt.sparse.b": (a,),
        "adapt.dense.w": (cfg.dense_kernel, cfg.dense_kernel, cfg.dense_channels, a),
        "adapt.dense.b": (a,),
    }

    def block(name, cin, cout):
        shapes[f"{name}.conv0.w"] = (k, k, cin, cout)
        shapes[f"{name}.conv0.b"] = (cout,)
        shapes[f"{name}.conv1.w"] = (k, k, cout, cout)
        shapes[f"{name}.conv1.b"] = (cout,)

    cin = 2 * a
    for lvl in range(cfg.depth):
        block(f"enc{lvl}", cin, cfg.width(lvl))
        cin = cfg.width(lvl)
    for lvl in reversed(range(cfg.depth - 1)):
        below = cfg.width(lvl + 1)
        if cfg.upsample == "transposed":
            shapes[f"up{lvl}.w"] = (2, 2, below, below)
            shapes[f"up{lvl}.b"] = (below,)
        block(f"dec{lvl}", cfg.width(lvl) + below, cfg.width(lvl))
    shapes["head.w"] = (1, 1, cfg.width(0), cfg.out_channels)
    shapes["head.b"] = (cfg.out_channels,)
    return shapes


def init_params(cfg: UNetConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        kh, kw, cin, _ = shape
        if name == "adapt.sparse.w":
            cin //= NUM_SLOTS  # one live stack channel per input pixel
        gain = 3.0 if name == "head.w" else 6.0
        bound = np.sqrt(gain / (kh * kw * cin))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def count_params(cfg: UNetConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(cfg).values()))


class UNet:
    """Explicit forward/backward over a parameter dict.

    ``forward`` caches what ``backward`` needs; ``signature`` summarizes the
    ReLU masks and pooling choices of the last forward pass.
    """

    def __init__(self, cfg: UNetConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)
        self._cache = None

    # -- building blocks ------------------------------------------------
    def _block_fwd(self, name, x, cache):
        p = self.params
        y0 = L.relu_forward(L.conv2d_forward(x, p[f"{name}.conv0.w"], p[f"{name}.conv0.b"]))
        y1 = L.relu_forward(L.conv2d_forward(y0, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"]))
        cache[name] = (x, y0, y1)
        return y1

    def _block_bwd(self, name, g, cache, grads):
        p = self.params
        x, y0, y1 = cache[name]
        g = L.relu_backward(g, y1)
        g, grads[f"{name}.conv1.w"], grads[f"{name}.conv1.b"] = L.conv2d_backward(g, y0, p[f"{name}.conv1.w"])
        g = L.relu_backward(g, y0)
        g, grads[f"{name}.conv0.w"], grads[f"{name}.conv0.b"] = L.conv2d_backward(g, x, p[f"{name}.conv0.w"])
        return g

    # -- public API -------------------------------------------------------
    def forward(self, sparse, dense):
        cfg, p = self.cfg, self.params
        if sparse.shape[:3] != dense.shape[:3]:
            raise ValueError(f"branch shapes differ: {sparse.shape} vs {dense.shape}")
        if sparse.shape[3] != cfg.sparse_planes or dense.shape[3] != cfg.dense_channels:
            raise ValueError("input channels do not match the network config")
        step = 2 ** (cfg.depth - 1)
        if sparse.shape[1] % step or sparse.shape[2] % step:
            raise ValueError(f"spatial dims must be divisible by {step}")
        cache = {"sparse": sparse, "dense": dense, "pool": {}}
        s = L.relu_forward(L.mosaic_conv_forward(sparse, p["adapt.sparse.w"], p["adapt.sparse.b"]))
        d = L.relu_forward(L.conv2d_forward(dense, p["adapt.dense.w"], p["adapt.dense.b"]))
        cache["adapt"] = (s, d)
        h = L.concat_forward(s, d)
        for lvl in range(cfg.depth - 1):
            h = self._block_fwd(f"enc{lvl}", h, cache)
            h, cache["pool"][lvl] = L.maxpool2_forward(h)
        h = self._block_fwd(f"enc{cfg.depth - 1}", h, cache)
        for lvl in reversed(range(cfg.depth - 1)):
            if cfg.upsample == "transposed":
                cache[f"up{lvl}"] = h
                u = L.upconv2_forward(h, p[f"up{lvl}.w"], p[f"up{lvl}.b"])
            else:
                u = L.upsample2_forward(h)
            h = self._block_fwd(f"dec{lvl}", L.concat_forward(cache[f"enc{lvl}"][2], u), cache)
        cache["head"] = h
        self._cache = cache
        return L.conv2d_forward(h, p["head.w"], p["head.b"])

    def backward(self, gout, input_grads=False):
        """Parameter gradients (and input gradients if asked) for the last forward."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        cfg, p, cache = self.cfg, self.params, self._cache
        grads = {}
        g, grads["head.w"], grads["head.b"] = L.conv2d_backward(gout, cache["head"], p["head.w"])
        skip_grads = {}
        for lvl in range(cfg.depth - 1):
            g = self._block_bwd(f"dec{lvl}", g, cache, grads)
            gs, gu = L.concat_backward(g, cfg.width(lvl))
            skip_grads[lvl] = gs
            if cfg.upsample == "transposed":
                g, grads[f"up{lvl}.w"], grads[f"up{lvl}.b"] = L.upconv2_backward(gu, cache[f"up{lvl}"], p[f"up{lvl}.w"])
            else:
                g = L.upsample2_backward(gu)
        g = self._block_bwd(f"enc{cfg.depth - 1}", g, cache, grads)
        for lvl in reversed(range(cfg.depth - 1)):
            g = L.maxpool2_backward(g, cache["pool"][lvl]) + skip_grads[lvl]
            g = self._block_bwd(f"enc{lvl}", g, cache, grads)
        s, d = cache["adapt"]
        gs, gd = L.concat_backward(g, cfg.branch_channels)
        gsparse, grads["adapt.sparse.w"], grads["adapt.sparse.b"] = L.mosaic_conv_backward(
            L.relu_backward(gs, s), cache["sparse"], p["adapt.sparse.w"], need_input=input_grads)
        gdense, grads["adapt.dense.w"], grads["adapt.dense.b"] = L.conv2d_backward(
            L.relu_backward(gd, d), cache["dense"], p["adapt.dense.w"], need_input=input_grads)
        grads = {name: grads[name] for name in p}
        if input_grads:
            return grads, gsparse, gdense
        return grads

    def signature(self) -> bytes:
        """Packed ReLU masks and pool argmaxes of the last forward pass."""
        if self._cache is None:
            return b""
        parts = [np.packbits(a > 0) for a in self._cache["adapt"]]
        for key, val in self._cache.items():
            if isinstance(val, tuple) and len(val) == 3:
                parts += [np.packbits(val[1] > 0), np.packbits(val[2] > 0)]
        parts += [idx.astype(np.uint8).ravel() for idx in self._cache["pool"].values()]
        return b"".join(part.tobytes() for part in parts)
