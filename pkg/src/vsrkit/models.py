"""Adapted super-resolution backbones operating on early-fused super-images.

Three block families are available behind one config: residual-dense blocks
(dense connections fused by a 1x1 conv), residual channel-attention blocks
(per-channel gating from globally pooled features) and plain residual blocks
with 0.1 residual scaling. Each network's first convolution accepts
3*(2T+1) input channels so a whole temporal window enters at once, and the
tail is a sub-pixel (pixel-shuffle) 4x upsampler. Setting T=0 recovers the
original single-image network.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import ConfigError, ShapeError
from .resize import bicubic_upsample
from .temporal import SuperImage, center_frame
from .tensor import (Tensor, add, concat_channels, conv2d, default_dtype,
                     global_avg_pool, mul, pixel_shuffle, relu, scale, sigmoid)

ARCH_KINDS = ("rdn", "rcan", "edsr")
UPSCALE = 4


@dataclass(frozen=True)
class SrConfig:
    """Architecture hyperparameters for one adapted SR network."""

    arch: str = "rdn"
    temporal_radius: int = 2
    width: int = 64
    num_blocks: int = 4
    growth: int = 16
    layers_per_block: int = 2
    ca_reduction: int = 4
    bicubic_residual: bool = False
    scale: int = UPSCALE

    @property
    def input_channels(self) -> int:
        return 3 * (2 * self.temporal_radius + 1)

    def validate(self) -> list:
        problems = []
        if self.arch not in ARCH_KINDS:
            problems.append(f"arch must be one of {ARCH_KINDS}, got {self.arch!r}")
        if self.temporal_radius < 0:
            problems.append(f"temporal_radius must be >= 0, got {self.temporal_radius}")
        if self.num_blocks < 1:
            problems.append(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.ca_reduction < 1:
            problems.append(f"ca_reduction must be >= 1, got {self.ca_reduction}")
        if self.width < self.ca_reduction:
            problems.append(f"width {self.width} must be >= ca_reduction {self.ca_reduction}")
        if self.arch == "rcan" and self.width % self.ca_reduction != 0:
            problems.append(
                f"ca_reduction {self.ca_reduction} must divide width {self.width}")
        if self.growth < 1:
            problems.append(f"growth must be >= 1, got {self.growth}")
        if self.layers_per_block < 1:
            problems.append(f"layers_per_block must be >= 1, got {self.layers_per_block}")
        if self.scale != UPSCALE:
            problems.append(f"scale is fixed at {UPSCALE}, got {self.scale}")
        return problems


def toy_config(arch: str = "rdn", temporal_radius: int = 2, **overrides) -> SrConfig:
    """A configuration small enough to train on one CPU core in minutes."""
    cfg = SrConfig(arch=arch, temporal_radius=temporal_radius, width=32,
                   num_blocks=4, growth=16, layers_per_block=2, ca_reduction=4)
    return replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# block forwards
# ---------------------------------------------------------------------------

def residual_dense_block(x: Tensor, conv_weights, conv_biases,
                         fuse_weight: Tensor, fuse_bias: Tensor,
                         trace: list | None = None) -> Tensor:
    """Dense block: each conv consumes all prior outputs, then 1x1 fusion + residual."""
    feats = x
    if trace is not None:
        trace.append(feats.data.shape[1])
    for w, b in zip(conv_weights, conv_biases):
        k = w.data.shape[2]
        grown = relu(conv2d(feats, w, b, stride=1, padding=(k - 1) // 2))
        feats = concat_channels([feats, grown])
        if trace is not None:
            trace.append(feats.data.shape[1])
    fused = conv2d(feats, fuse_weight, fuse_bias, stride=1, padding=0)
    return add(fused, x)


def channel_attention_block(x: Tensor, conv1_w, conv1_b, conv2_w, conv2_b,
                            down_w, down_b, up_w, up_b) -> Tensor:
    """Residual block whose trunk is rescaled per channel by a pooled sigmoid gate."""
    trunk = conv2d(relu(conv2d(x, conv1_w, conv1_b, 1, 1)), conv2_w, conv2_b, 1, 1)
    pooled = global_avg_pool(trunk)
    gate = sigmoid(conv2d(relu(conv2d(pooled, down_w, down_b)), up_w, up_b))
    return add(x, mul(trunk, gate))


def residual_block(x: Tensor, conv1_w, conv1_b, conv2_w, conv2_b,
                   res_scale: float = 0.1) -> Tensor:
    """Conv-relu-conv with scaled residual, no normalization."""
    trunk = conv2d(relu(conv2d(x, conv1_w, conv1_b, 1, 1)), conv2_w, conv2_b, 1, 1)
    return add(x, scale(trunk, res_scale))


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class SrModel:
    """A built network: config plus a flat, ordered parameter dict."""

    def __init__(self, config: SrConfig, params: "dict[str, Tensor]"):
        self.config = config
        self.params = params

    @property
    def temporal_radius(self) -> int:
        return self.config.temporal_radius

    @property
    def input_channels(self) -> int:
        return self.config.input_channels

    @property
    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def parameters(self) -> "dict[str, Tensor]":
        return self.params

    def set_requires_grad(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag

    def forward_tensor(self, x: Tensor) -> Tensor:
        """Run the network on a raw (n, 3(2T+1), h, w) batch."""
        cfg = self.config
        P = self.params
        if x.data.shape[1] != cfg.input_channels:
            raise ShapeError("channel", f"3(2T+1) = {cfg.input_channels}",
                             x.data.shape[1], f"{cfg.arch} input")
        f0 = conv2d(x, P["head.weight"], P["head.bias"], 1, 1)
        if cfg.arch == "rdn":
            h = conv2d(f0, P["shallow.weight"], P["shallow.bias"], 1, 1)
            feats = []
            for i in range(cfg.num_blocks):
                ws = [P[f"block{i}.conv{j}.weight"] for j in range(cfg.layers_per_block)]
                bs = [P[f"block{i}.conv{j}.bias"] for j in range(cfg.layers_per_block)]
                h = residual_dense_block(h, ws, bs,
                                         P[f"block{i}.fuse.weight"], P[f"block{i}.fuse.bias"])
                feats.append(h)
            g = conv2d(concat_channels(feats), P["gff1.weight"], P["gff1.bias"], 1, 0)
            g = conv2d(g, P["gff2.weight"], P["gff2.bias"], 1, 1)
            body = add(g, f0)
        elif cfg.arch == "rcan":
            h = f0
            for i in range(cfg.num_blocks):
                h = channel_attention_block(
                    h,
                    P[f"block{i}.conv1.weight"], P[f"block{i}.conv1.bias"],
                    P[f"block{i}.conv2.weight"], P[f"block{i}.conv2.bias"],
                    P[f"block{i}.down.weight"], P[f"block{i}.down.bias"],
                    P[f"block{i}.up.weight"], P[f"block{i}.up.bias"])
            h = conv2d(h, P["trunk.weight"], P["trunk.bias"], 1, 1)
            body = add(h, f0)
        else:  # edsr
            h = f0
            for i in range(cfg.num_blocks):
                h = residual_block(
                    h,
                    P[f"block{i}.conv1.weight"], P[f"block{i}.conv1.bias"],
                    P[f"block{i}.conv2.weight"], P[f"block{i}.conv2.bias"])
            h = conv2d(h, P["trunk.weight"], P["trunk.bias"], 1, 1)
            body = add(h, f0)
        tail = conv2d(body, P["tail.weight"], P["tail.bias"], 1, 1)
        out = pixel_shuffle(tail, UPSCALE)
        if cfg.bicubic_residual:
            t = cfg.temporal_radius
            center = x.data[:, 3 * t:3 * t + 3]
            out = add(out, bicubic_upsample(center))
        return out

    def __call__(self, s: SuperImage) -> Tensor:
        return sr_forward(self, s)


def sr_forward(model: SrModel, s: SuperImage) -> Tensor:
    """Super-resolve one super-image to a (1, 3, 4h, 4w) frame."""
    return model.forward_tensor(s.tensor)


def build_adapted_net(config: SrConfig, seed: int) -> SrModel:
    """Deterministically initialize a network for ``config``.

    Conv weights use Kaiming-uniform fan-in initialization; biases start at
    zero. The creation order below fixes the RNG stream, so equal seeds give
    bit-identical models.
    """
    problems = config.validate()
    if problems:
        raise ConfigError(problems)
    rng = np.random.default_rng(np.random.SeedSequence([0x5EED, int(seed)]))
    dt = default_dtype()
    params: dict[str, Tensor] = {}

    def conv_param(name: str, c_out: int, c_in: int, k: int,
                   relu_next: bool = False) -> None:
        # Kaiming-uniform fan-in; the sqrt(2) relu gain only where a relu
        # actually follows, so long linear chains keep unit variance.
        fan_in = c_in * k * k
        bound = np.sqrt((6.0 if relu_next else 3.0) / fan_in)
        w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(dt)
        params[f"{name}.weight"] = Tensor(w, requires_grad=True)
        params[f"{name}.bias"] = Tensor(np.zeros(c_out, dtype=dt), requires_grad=True)

    w_ = config.width
    conv_param("head", w_, config.input_channels, 3)
    if config.arch == "rdn":
        conv_param("shallow", w_, w_, 3)
        for i in range(config.num_blocks):
            for j in range(config.layers_per_block):
                conv_param(f"block{i}.conv{j}", config.growth, w_ + j * config.growth, 3,
                           relu_next=True)
            conv_param(f"block{i}.fuse", w_, w_ + config.layers_per_block * config.growth, 1)
        conv_param("gff1", w_, config.num_blocks * w_, 1)
        conv_param("gff2", w_, w_, 3)
    elif config.arch == "rcan":
        mid = w_ // config.ca_reduction
        for i in range(config.num_blocks):
            conv_param(f"block{i}.conv1", w_, w_, 3, relu_next=True)
            conv_param(f"block{i}.conv2", w_, w_, 3)
            conv_param(f"block{i}.down", mid, w_, 1, relu_next=True)
            conv_param(f"block{i}.up", w_, mid, 1)
        conv_param("trunk", w_, w_, 3)
    else:
        for i in range(config.num_blocks):
            conv_param(f"block{i}.conv1", w_, w_, 3, relu_next=True)
            conv_param(f"block{i}.conv2", w_, w_, 3)
        conv_param("trunk", w_, w_, 3)
    conv_param("tail", 3 * UPSCALE * UPSCALE, w_, 3)
    return SrModel(config, params)


# ---------------------------------------------------------------------------
# checkpoint header encoding
# ---------------------------------------------------------------------------

_SR_KIND_CODE = 1.0


def config_record(config: SrConfig) -> np.ndarray:
    """Encode a config as a small float vector (all fields are small integers)."""
    return np.array([
        _SR_KIND_CODE,
        float(ARCH_KINDS.index(config.arch)),
        float(config.temporal_radius),
        float(config.width),
        float(config.num_blocks),
        float(config.growth),
        float(config.layers_per_block),
        float(config.ca_reduction),
        1.0 if config.bicubic_residual else 0.0,
        float(config.scale),
    ], dtype=np.float32)


def config_from_record(vec: np.ndarray) -> SrConfig:
    v = np.asarray(vec).reshape(-1)
    if v.size != 10 or v[0] != _SR_KIND_CODE:
        raise ConfigError([f"not an SR model config record (got {v.tolist()!r})"])
    return SrConfig(arch=ARCH_KINDS[int(v[1])], temporal_radius=int(v[2]),
                    width=int(v[3]), num_blocks=int(v[4]), growth=int(v[5]),
                    layers_per_block=int(v[6]), ca_reduction=int(v[7]),
                    bicubic_residual=bool(v[8] > 0.5), scale=int(v[9]))
