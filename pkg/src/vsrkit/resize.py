"""Separable bicubic resampling with the Catmull-Rom kernel (a = -0.5).

Sampling is edge-clamped: taps that fall outside the image reuse the border
sample. Each axis is resampled by a dense matrix with four non-zero weights
per output row, so results are deterministic and the same code serves both
the 4x upsampling residual path and the 4x degradation used to synthesize
low-resolution sequences.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import Tensor

_A = -0.5  # Catmull-Rom


def catmull_rom(x: np.ndarray) -> np.ndarray:
    """Kernel weight at (continuous) distance ``x`` from a sample."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    w = np.zeros_like(ax)
    near = ax <= 1.0
    far = (ax > 1.0) & (ax < 2.0)
    w[near] = (_A + 2.0) * ax[near] ** 3 - (_A + 3.0) * ax[near] ** 2 + 1.0
    w[far] = _A * ax[far] ** 3 - 5.0 * _A * ax[far] ** 2 + 8.0 * _A * ax[far] - 4.0 * _A
    return w


def _axis_matrix(n_in: int, n_out: int, scale: float) -> np.ndarray:
    """Resampling matrix mapping ``n_in`` samples to ``n_out`` (4 taps per row)."""
    out = np.zeros((n_out, n_in), dtype=np.float64)
    for j in range(n_out):
        u = (j + 0.5) * scale - 0.5  # source coordinate of this output sample
        base = int(np.floor(u))
        frac = u - base
        for o in (-1, 0, 1, 2):
            w = catmull_rom(frac - o)
            idx = min(max(base + o, 0), n_in - 1)  # edge clamp
            out[j, idx] += w
    return out


def _resize_data(data: np.ndarray, h_out: int, w_out: int) -> np.ndarray:
    h_in, w_in = data.shape[2], data.shape[3]
    mh = _axis_matrix(h_in, h_out, h_in / h_out)
    mw = _axis_matrix(w_in, w_out, w_in / w_out)
    tmp = np.tensordot(data.astype(np.float64), mw, axes=([3], [1]))  # (n,c,h,w_out)
    out = np.tensordot(tmp, mh, axes=([2], [1]))                      # (n,c,w_out,h_out)
    return np.ascontiguousarray(out.transpose(0, 1, 3, 2)).astype(data.dtype)


def bicubic_resize(img, factor) -> Tensor:
    """Resize by 4 (up) or 1/4 (down); accepts a Tensor or ndarray, returns a leaf Tensor."""
    data = img.data if isinstance(img, Tensor) else np.asarray(img)
    if data.ndim != 4:
        raise ShapeError("ndim", 4, data.ndim, "bicubic_resize input")
    n, c, h, w = data.shape
    if factor == 4:
        return Tensor(_resize_data(data, h * 4, w * 4))
    if factor in (0.25, 1 / 4):
        if h % 4 != 0:
            raise ShapeError("height", "divisible by 4", h, "bicubic downscale")
        if w % 4 != 0:
            raise ShapeError("width", "divisible by 4", w, "bicubic downscale")
        return Tensor(_resize_data(data, h // 4, w // 4))
    raise ValueError(f"unsupported resize factor {factor!r}; use 4 or 0.25")


def bicubic_upsample(img) -> Tensor:
    return bicubic_resize(img, 4)


def bicubic_downsample(img) -> Tensor:
    return bicubic_resize(img, 0.25)
