"""Temporal windows and early fusion of frames into multi-channel super-images.

A super-image for target frame ``t`` stacks the 2T+1 frames around ``t`` along
the channel axis (RGB-contiguous per frame, window order), so a plain 2-D
network sees temporal context through its input channels. Frame indices that
fall outside the sequence are mirrored back in without repeating the boundary
frame: index -1 maps to 1, index L maps to L-2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ShapeError
from .tensor import Tensor, concat_channels, slice_channels


@dataclass(frozen=True)
class TemporalWindow:
    """Resolved frame indices for one target frame."""

    t: int
    radius: int
    indices: tuple

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class SuperImage:
    """The early-fused input tensor for one target frame.

    ``tensor`` has 3*(2*radius+1) channels; channel block k (3 channels) holds
    the frame at ``indices[k]`` of the originating window.
    """

    tensor: Tensor
    t: int
    radius: int

    @property
    def num_frames(self) -> int:
        return 2 * self.radius + 1


def temporal_window(seq_len: int, t: int, radius: int) -> TemporalWindow:
    """Resolve the frame indices [t-radius, ..., t+radius] with reflection.

    Out-of-range indices are mirrored without repeating the boundary
    (i < 0 -> -i, i >= L -> 2L-2-i), applied until in range.
    """
    if seq_len < 1:
        raise ValueError(f"sequence length must be >= 1, got {seq_len}")
    if not 0 <= t < seq_len:
        raise ValueError(f"target frame {t} outside sequence of length {seq_len}")
    if radius < 0:
        raise ValueError(f"window radius must be >= 0, got {radius}")
    if radius >= seq_len:
        raise ValueError(
            f"window radius {radius} must be smaller than the sequence length {seq_len}; "
            "reflection is undefined past one fold")
    indices = []
    for i in range(t - radius, t + radius + 1):
        while not 0 <= i < seq_len:
            i = -i if i < 0 else 2 * seq_len - 2 - i
        indices.append(i)
    return TemporalWindow(t=t, radius=radius, indices=tuple(indices))


def build_super_image(frames: Sequence[Tensor], window: TemporalWindow) -> SuperImage:
    """Concatenate the window's frames along the channel axis.

    ``frames`` is the full sequence; the window picks which entries are fused.
    """
    if len(frames) == 0:
        raise ValueError("build_super_image needs a non-empty frame list")
    ref = frames[window.indices[0]].data.shape
    for k, idx in enumerate(window.indices):
        f = frames[idx]
        if f.data.ndim != 4 or f.data.shape[0] != 1 or f.data.shape[1] != 3:
            raise ShapeError("frame", "(1, 3, h, w)", f.data.shape, f"window frame {k}")
        if f.data.shape[2:] != ref[2:]:
            raise ShapeError("spatial", ref[2:], f.data.shape[2:], f"window frame {k}")
    fused = concat_channels([frames[i] for i in window.indices])
    return SuperImage(tensor=fused, t=window.t, radius=window.radius)


def frame_block(s: SuperImage, k: int) -> Tensor:
    """Slice channel block k (one RGB frame) back out of a super-image."""
    if not 0 <= k < s.num_frames:
        raise ValueError(f"block {k} outside window of {s.num_frames} frames")
    return slice_channels(s.tensor, 3 * k, 3 * k + 3)


def center_frame(s: SuperImage) -> Tensor:
    """The window midpoint, i.e. the frame being super-resolved."""
    return frame_block(s, s.radius)
