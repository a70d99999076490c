"""Learned adaptive fusion of candidate frames from several models.

One small shared-weight ConvNet scores every candidate frame: three
conv-bn-relu stages (16, 32 and 64 output channels, all kernels 2x2 with
stride 2, no padding) shrink the frame by 8x, and a final 1x1 convolution
leaves a one-channel score map. Softmax across the model axis turns the N
score maps into convex weights, nearest upsampling by 8 spreads each weight
over its 8x8 patch, and the fused frame is the weighted sum of candidates.
An unweighted mean (:func:`average_ensemble`) is the baseline to beat.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .optim import OptimizerState, optimizer_step
from .tensor import (RunningStats, Tensor, backward, batchnorm, concat_batch,
                     conv2d, crop_spatial, default_dtype, l1_loss, mul,
                     no_grad, reflect_pad, relu, softmax_over_models,
                     sum_over_models, upsample_nearest)

STAGE_CHANNELS = (16, 32, 64)
BLOCK = 8  # spatial reduction of the score net; one weight per 8x8 patch


@dataclass
class CandidateSet:
    """N aligned high-resolution candidate frames, one per model."""

    candidates: "list[Tensor]"
    names: "list[str]"

    def __post_init__(self):
        if len(self.candidates) < 1:
            raise ConfigError(["candidate set needs at least one frame"])
        if len(self.names) != len(self.candidates):
            raise ConfigError([f"{len(self.names)} names for {len(self.candidates)} candidates"])
        ref = self.candidates[0].data.shape
        for k, c in enumerate(self.candidates):
            if c.data.ndim != 4 or c.data.shape[0] != 1 or c.data.shape[1] != 3:
                raise ShapeError("frame", "(1, 3, h, w)", c.data.shape, f"candidate {k}")
            if c.data.shape != ref:
                raise ShapeError("shape", ref, c.data.shape, f"candidate {k}")
        h, w = ref[2], ref[3]
        if h % BLOCK != 0 or w % BLOCK != 0:
            raise ShapeError("spatial", f"divisible by {BLOCK}", (h, w), "candidate frames")

    @property
    def count(self) -> int:
        return len(self.candidates)

    @property
    def height(self) -> int:
        return self.candidates[0].data.shape[2]

    @property
    def width(self) -> int:
        return self.candidates[0].data.shape[3]


@dataclass
class FusionWeights:
    """Per-pixel convex weights, one map per model, constant on 8x8 blocks."""

    weights: Tensor

    @property
    def count(self) -> int:
        return self.weights.data.shape[0]


class EnsembleNet:
    """The shared score network applied independently to each candidate."""

    def __init__(self, params: "dict[str, Tensor]", stats: "list[RunningStats]"):
        self.params = params
        self.stats = stats

    @property
    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def parameters(self) -> "dict[str, Tensor]":
        return self.params


def build_ensemble_net(seed: int) -> EnsembleNet:
    """Deterministically initialize the fixed score-net architecture."""
    rng = np.random.default_rng(np.random.SeedSequence([0xE45E, int(seed)]))
    dt = default_dtype()
    params: dict[str, Tensor] = {}
    stats: list[RunningStats] = []
    c_in = 3
    for i, c_out in enumerate(STAGE_CHANNELS):
        fan_in = c_in * 2 * 2
        bound = np.sqrt(6.0 / fan_in)
        params[f"conv{i}.weight"] = Tensor(
            rng.uniform(-bound, bound, size=(c_out, c_in, 2, 2)).astype(dt), requires_grad=True)
        params[f"conv{i}.bias"] = Tensor(np.zeros(c_out, dtype=dt), requires_grad=True)
        params[f"bn{i}.gamma"] = Tensor(np.ones(c_out, dtype=dt), requires_grad=True)
        params[f"bn{i}.beta"] = Tensor(np.zeros(c_out, dtype=dt), requires_grad=True)
        stats.append(RunningStats(c_out, dtype=dt))
        c_in = c_out
    bound = np.sqrt(6.0 / c_in)
    params["head.weight"] = Tensor(
        rng.uniform(-bound, bound, size=(1, c_in, 1, 1)).astype(dt), requires_grad=True)
    params["head.bias"] = Tensor(np.zeros(1, dtype=dt), requires_grad=True)
    return EnsembleNet(params, stats)


def score_map(net: EnsembleNet, candidate: Tensor, training: bool = False) -> Tensor:
    """Score one candidate frame down to a (1, 1, h/8, w/8) map."""
    h, w = candidate.data.shape[2], candidate.data.shape[3]
    if h % BLOCK != 0 or w % BLOCK != 0:
        need_h = (BLOCK - h % BLOCK) % BLOCK
        need_w = (BLOCK - w % BLOCK) % BLOCK
        raise ShapeError("spatial", f"divisible by {BLOCK} (pad by ({need_h}, {need_w}))",
                         (h, w), "score_map input")
    x = candidate
    for i in range(len(STAGE_CHANNELS)):
        x = conv2d(x, net.params[f"conv{i}.weight"], net.params[f"conv{i}.bias"],
                   stride=2, padding=0)
        x = batchnorm(x, net.params[f"bn{i}.gamma"], net.params[f"bn{i}.beta"],
                      net.stats[i], training=training)
        x = relu(x)
    return conv2d(x, net.params["head.weight"], net.params["head.bias"], 1, 0)


def fusion_weights(score_maps: Tensor) -> FusionWeights:
    """Softmax across models at low resolution, then 8x nearest upsampling."""
    soft = softmax_over_models(score_maps)
    return FusionWeights(weights=upsample_nearest(soft, BLOCK))


def fuse(cands: CandidateSet, w: FusionWeights) -> Tensor:
    """Weighted sum of candidates; weights broadcast across RGB."""
    if w.count != cands.count:
        raise ShapeError("models", cands.count, w.count, "fuse weights")
    if w.weights.data.shape[2:] != (cands.height, cands.width):
        raise ShapeError("spatial", (cands.height, cands.width),
                         w.weights.data.shape[2:], "fuse weights")
    stacked = Tensor(np.concatenate([c.data for c in cands.candidates], axis=0))
    return sum_over_models(mul(w.weights, stacked))


def average_ensemble(cands: CandidateSet) -> Tensor:
    """Plain elementwise mean of the candidates."""
    return average_fuse(cands.candidates)


def average_fuse(frames: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of aligned frames (no size restriction)."""
    if len(frames) == 0:
        raise ConfigError(["average_fuse needs at least one candidate"])
    stack = np.stack([f.data for f in frames], axis=0)
    return Tensor(stack.mean(axis=0))


def candidate_score_maps(net: EnsembleNet, cands: CandidateSet,
                         training: bool = False) -> Tensor:
    """Stack the N per-candidate score maps into an (N, 1, h/8, w/8) tensor."""
    return concat_batch([score_map(net, c, training=training) for c in cands.candidates])


def adaptive_fuse(net: EnsembleNet, frames: Sequence[Tensor],
                  names: "Sequence[str] | None" = None,
                  return_weights: bool = False):
    """Fuse candidate frames with learned weights (batch-norm in eval mode).

    Frames whose height or width is not a multiple of 8 are mirror-padded to
    the next multiple, fused, and cropped back.
    """
    if len(frames) == 0:
        raise ConfigError(["adaptive_fuse needs at least one candidate"])
    names = list(names) if names is not None else [f"model{i}" for i in range(len(frames))]
    h, w = frames[0].data.shape[2], frames[0].data.shape[3]
    pad_h = (BLOCK - h % BLOCK) % BLOCK
    pad_w = (BLOCK - w % BLOCK) % BLOCK
    with no_grad():
        if pad_h or pad_w:
            frames = [reflect_pad(f, pad_h, pad_w) for f in frames]
        cands = CandidateSet(candidates=list(frames), names=names)
        weights = fusion_weights(candidate_score_maps(net, cands, training=False))
        fused = fuse(cands, weights)
        if pad_h or pad_w:
            fused = crop_spatial(fused, 0, 0, h, w)
    if return_weights:
        return fused, weights
    return fused


def train_ensemble_step(net: EnsembleNet, cands: CandidateSet, ground_truth: Tensor,
                        optimizer: OptimizerState) -> float:
    """One gradient step of the score net on a single fusion sample.

    Candidates are constants; the loss gradient reaches only the shared score
    network, through the softmax.
    """
    if ground_truth.data.shape != cands.candidates[0].data.shape:
        raise ShapeError("shape", cands.candidates[0].data.shape,
                         ground_truth.data.shape, "ensemble ground truth")
    for p in net.params.values():
        p.zero_grad()
    weights = fusion_weights(candidate_score_maps(net, cands, training=True))
    fused = fuse(cands, weights)
    step_loss = l1_loss(fused, ground_truth)
    backward(step_loss, params=net.params.values())
    optimizer_step(optimizer, net.params)
    return step_loss.item()
