"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


def check_video(x, name: str = "X", channels: int = 3) -> np.ndarray:
    """Validate one video as a finite float array of shape (frames, c, h, w)."""
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 4:
        raise ShapeError("ndim", 4, arr.ndim, f"{name} must be (frames, {channels}, h, w)")
    if arr.shape[1] != channels:
        raise ShapeError("channel", channels, arr.shape[1], name)
    if arr.shape[0] < 1:
        raise ShapeError("frames", ">= 1", arr.shape[0], name)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf values")
    if arr.min() < -1e-6 or arr.max() > 1 + 1e-6:
        raise ValueError(f"{name} values must lie in [0, 1]; got range "
                         f"[{arr.min():.6g}, {arr.max():.6g}]")
    return arr


def check_video_list(xs, name: str = "X") -> "list[np.ndarray]":
    if not isinstance(xs, (list, tuple)) or len(xs) == 0:
        raise ValueError(f"{name} must be a non-empty list of (frames, 3, h, w) arrays")
    return [check_video(x, f"{name}[{i}]") for i, x in enumerate(xs)]


def check_paired_videos(xs, ys, scale: int = 4) -> "tuple[list, list]":
    """Validate aligned LR/HR video lists; HR must be exactly `scale`x larger."""
    lr = check_video_list(xs, "X")
    hr = check_video_list(ys, "y")
    if len(lr) != len(hr):
        raise ValueError(f"X has {len(lr)} videos but y has {len(hr)}")
    for i, (a, b) in enumerate(zip(lr, hr)):
        if a.shape[0] != b.shape[0]:
            raise ShapeError("frames", a.shape[0], b.shape[0], f"y[{i}]")
        if (a.shape[2] * scale, a.shape[3] * scale) != (b.shape[2], b.shape[3]):
            raise ShapeError("spatial", (a.shape[2] * scale, a.shape[3] * scale),
                             b.shape[2:], f"y[{i}] must be {scale}x the size of X[{i}]")
    return lr, hr


def frames_to_tensors(video: np.ndarray) -> "list[Tensor]":
    return [Tensor(np.ascontiguousarray(video[t:t + 1])) for t in range(video.shape[0])]
