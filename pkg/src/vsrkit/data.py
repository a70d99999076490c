"""Synthetic video data, bicubic degradation, split bookkeeping and patch sampling.

The generator renders each frame analytically from a mixture of drifting
sinusoidal gratings over a static gradient background. Because the gratings
translate with constant sub-pixel velocity, consecutive frames sample the
same scene at different phases; after 4x downscaling the high-frequency
gratings alias, which is exactly the situation where a temporal window
carries recoverable detail that a single frame does not.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ShapeError
from .resize import bicubic_downsample
from .serialize import read_ppm, write_ppm
from .temporal import temporal_window
from .tensor import Tensor, default_dtype

ROLES = ("train", "select", "test")


@dataclass
class VideoSequence:
    id: str
    frames: "list[Tensor]"
    role: str = "train"

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_shape(self) -> tuple:
        return self.frames[0].data.shape


@dataclass(frozen=True)
class SplitConfig:
    train: int
    select: int
    test: int
    seed: int = 0

    @property
    def total(self) -> int:
        return self.train + self.select + self.test


@dataclass(frozen=True)
class MotionSpec:
    """Ranges for the drifting gratings (speeds in HR pixels per frame).

    Periods default to 3..24 HR pixels: every grating is representable at HR
    (period > 2 px) while most alias after 4x downscaling (period < 8 px), so
    a temporal window carries genuinely recoverable detail.
    """

    patterns: int = 8
    speed_min: float = 0.5
    speed_max: float = 3.0
    min_period: float = 3.0
    max_period: float = 24.0


@dataclass(frozen=True)
class PatchPair:
    """One LR training window crop and its co-located HR ground-truth crop."""

    lr_patch: Tensor
    hr_patch: Tensor
    source: tuple  # (sequence id, t, (row, col) LR offset)


def generate_toy_dataset(n_sequences: int, frames_per_seq: int = 100,
                         hr_size: int = 96, motion: MotionSpec = MotionSpec(),
                         seed: int = 0) -> "list[VideoSequence]":
    """Render HR sequences procedurally; fully determined by the seed."""
    if n_sequences < 1:
        raise ConfigError([f"n_sequences must be >= 1, got {n_sequences}"])
    if frames_per_seq < 1:
        raise ConfigError([f"frames_per_seq must be >= 1, got {frames_per_seq}"])
    if hr_size < 4 or hr_size % 4 != 0:
        raise ConfigError([f"hr_size must be a positive multiple of 4, got {hr_size}"])
    children = np.random.SeedSequence([0xDA7A, int(seed)]).spawn(n_sequences)
    sequences = []
    for k in range(n_sequences):
        rng = np.random.default_rng(children[k])
        frames = _render_sequence(rng, frames_per_seq, hr_size, motion)
        sequences.append(VideoSequence(id=f"seq_{k:03d}", frames=frames))
    return sequences


def _render_sequence(rng: np.random.Generator, n_frames: int, size: int,
                     motion: MotionSpec) -> "list[Tensor]":
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    # Static textured-gradient background, distinct per RGB channel.
    grad_dir = rng.uniform(0, 2 * np.pi, size=3)
    grad_amp = rng.uniform(0.2, 0.5, size=3)
    background = np.stack([
        grad_amp[c] * (np.cos(grad_dir[c]) * xx + np.sin(grad_dir[c]) * yy) / size
        for c in range(3)])

    m = motion.patterns
    periods = rng.uniform(motion.min_period, motion.max_period, size=m)
    orient = rng.uniform(0, 2 * np.pi, size=m)
    phase = rng.uniform(0, 2 * np.pi, size=m)
    amps = rng.uniform(0.25, 1.0, size=(m, 3)) * rng.uniform(0.5, 1.0, size=(m, 1))
    speed = rng.uniform(motion.speed_min, motion.speed_max, size=m)
    direction = rng.uniform(0, 2 * np.pi, size=m)
    vx = speed * np.cos(direction)
    vy = speed * np.sin(direction)
    fx = np.cos(orient) / periods
    fy = np.sin(orient) / periods

    # Analytic intensity range makes normalization exact, so clipping is a
    # formality and every pixel lands in [0, 1].
    hi = grad_amp.reshape(3, 1, 1) + amps.sum(axis=0).reshape(3, 1, 1)
    lo = -hi
    span = hi - lo

    frames = []
    dt = default_dtype()
    for t in range(n_frames):
        field = background.copy()
        for j in range(m):
            arg = 2 * np.pi * (fx[j] * (xx - vx[j] * t) + fy[j] * (yy - vy[j] * t)) + phase[j]
            wave = np.sin(arg)
            field += amps[j].reshape(3, 1, 1) * wave
        norm = 0.05 + 0.9 * (field - lo) / span
        frames.append(Tensor(np.clip(norm, 0.0, 1.0).astype(dt)[None]))
    return frames


def degrade(seq: VideoSequence) -> VideoSequence:
    """4x bicubic downscale of every frame."""
    n, c, h, w = seq.frames[0].data.shape
    if h % 4 != 0 or w % 4 != 0:
        raise ShapeError("spatial", "divisible by 4", (h, w), f"degrade {seq.id}")
    return VideoSequence(id=seq.id, role=seq.role,
                         frames=[bicubic_downsample(f) for f in seq.frames])


def assign_splits(sequences: Sequence[VideoSequence], split: SplitConfig) -> "list[VideoSequence]":
    """Deterministic, disjoint, exhaustive role assignment."""
    if split.train < 0 or split.select < 0 or split.test < 0:
        raise ConfigError(["split counts must be >= 0"])
    if split.total != len(sequences):
        raise ConfigError([
            f"split counts {split.train}+{split.select}+{split.test} != {len(sequences)} sequences"])
    order = np.random.default_rng(
        np.random.SeedSequence([0x5917, int(split.seed)])).permutation(len(sequences))
    roles = {}
    cursor = 0
    for role, count in zip(ROLES, (split.train, split.select, split.test)):
        for idx in order[cursor:cursor + count]:
            roles[int(idx)] = role
        cursor += count
    return [replace(seq, role=roles[i]) for i, seq in enumerate(sequences)]


def sample_patch_pair(lr_seq: VideoSequence, hr_seq: VideoSequence, radius: int,
                      lr_patch: int, rng: np.random.Generator) -> PatchPair:
    """Random co-located LR window crop + HR center-frame crop at 4x scale."""
    length = len(lr_seq)
    _, _, h, w = lr_seq.frames[0].data.shape
    if lr_patch > h or lr_patch > w:
        raise ShapeError("patch", f"<= ({h}, {w})", lr_patch, "sample_patch_pair")
    t = int(rng.integers(length))
    window = temporal_window(length, t, radius)
    oy = int(rng.integers(h - lr_patch + 1))
    ox = int(rng.integers(w - lr_patch + 1))
    crops = [lr_seq.frames[i].data[:, :, oy:oy + lr_patch, ox:ox + lr_patch]
             for i in window.indices]
    lr = Tensor(np.ascontiguousarray(np.concatenate(crops, axis=1)))
    s = 4 * lr_patch
    hr = Tensor(np.ascontiguousarray(
        hr_seq.frames[t].data[:, :, 4 * oy:4 * oy + s, 4 * ox:4 * ox + s]))
    return PatchPair(lr_patch=lr, hr_patch=hr, source=(lr_seq.id, t, (oy, ox)))


# ---------------------------------------------------------------------------
# dataset directory layout: <root>/<split>/<seq_id>/frame_%03d.ppm
# ---------------------------------------------------------------------------

def save_sequence(root, seq: VideoSequence) -> Path:
    seq_dir = Path(root) / seq.role / seq.id
    seq_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.frames):
        write_ppm(seq_dir / f"frame_{i:03d}.ppm", frame)
    return seq_dir


def load_sequence_dir(seq_dir, role: str = "test") -> VideoSequence:
    seq_dir = Path(seq_dir)
    paths = sorted(seq_dir.glob("frame_*.ppm"))
    if not paths:
        raise ConfigError([f"no frame_*.ppm files under {seq_dir}"])
    frames = [Tensor(read_ppm(p)) for p in paths]
    return VideoSequence(id=seq_dir.name, frames=frames, role=role)


def load_split(root, role: str) -> "list[VideoSequence]":
    split_dir = Path(root) / role
    if not split_dir.is_dir():
        return []
    return [load_sequence_dir(d, role) for d in sorted(split_dir.iterdir()) if d.is_dir()]
