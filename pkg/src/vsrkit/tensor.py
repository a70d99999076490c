"""Dense 4-D float tensors with reverse-mode automatic differentiation.

Every value the toolkit computes flows through :class:`Tensor`. Operations
record their inputs and a backward closure; :func:`backward` replays them in
reverse construction order, which is a valid topological order because an
output tensor is always created after its inputs.

Convolution is plain cross-correlation (no kernel flip). Arithmetic defaults
to 32-bit floats; :func:`using_dtype` switches to 64-bit, which exists only to
tighten gradient checks.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_FINITE_CHECKS = False
_UIDS = itertools.count()


def default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    """Set the dtype used for newly created leaf tensors (float32 or float64)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _DEFAULT_DTYPE = dt.type


@contextmanager
def using_dtype(dtype):
    """Temporarily change the default dtype (64-bit mode for gradient checks)."""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextmanager
def no_grad():
    """Disable graph recording inside the block; inference runs use this."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def set_finite_checks(enabled: bool) -> None:
    """Toggle NaN/Inf detection on every op output (off by default for speed)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


class Tensor:
    """A dense float array plus optional gradient bookkeeping.

    ``data`` is a numpy array (row-major). ``grad`` is lazily allocated with
    the same shape during :func:`backward`. Tensors created by recorded ops
    keep references to their parent tensors and a closure that routes the
    output gradient back to them.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward", "_uid")

    def __init__(self, data, requires_grad: bool = False, *, op: str = "leaf",
                 parents: tuple = (), backward: Callable | None = None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = parents
        self._backward = backward
        self._uid = next(_UIDS)
        if _FINITE_CHECKS and not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values produced by op '{op}'")

    # -- basic properties -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("size", 1, self.data.size, "item() needs a scalar tensor")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A leaf tensor sharing this tensor's values, cut off from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def assert_finite(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError(f"tensor produced by op '{self.op}' holds NaN/Inf")

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- arithmetic sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=_DEFAULT_DTYPE))


def tensor(data, requires_grad: bool = False) -> Tensor:
    """Create a leaf tensor in the current default dtype."""
    return Tensor(np.asarray(data, dtype=_DEFAULT_DTYPE), requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE), requires_grad=requires_grad)


def _accumulate(parent: Tensor, grad: np.ndarray) -> None:
    if not parent.requires_grad:
        return
    if parent.grad is None:
        parent.grad = np.zeros_like(parent.data)
    parent.grad += grad.astype(parent.data.dtype, copy=False)


def _node(out_data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    requires = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(out_data, op=op)
    return Tensor(out_data, requires_grad=True, op=op,
                  parents=tuple(parents), backward=backward_fn)


def backward(root: Tensor, params: Iterable[Tensor] = ()) -> None:
    """Accumulate gradients of ``root`` into every reachable requires-grad tensor.

    ``root`` must be a scalar (one element). Any tensors passed via ``params``
    that the graph never touched come out with an all-zero gradient, so
    optimizers can treat unused parameters uniformly.
    """
    if root.data.size != 1:
        raise ShapeError("size", 1, root.data.size, "backward root must be scalar")
    # Reverse construction order is a topological order by construction:
    # every op output is created after all of its inputs.
    seen: set[int] = set()
    stack: list[Tensor] = [root]
    nodes: list[Tensor] = []
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append(parent)
    nodes.sort(key=lambda t: t._uid, reverse=True)
    root.grad = np.ones_like(root.data)
    for node in nodes:
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for p in params:
        if p.requires_grad and p.grad is None:
            p.grad = np.zeros_like(p.data)


# ---------------------------------------------------------------------------
# elementwise / broadcast ops
# ---------------------------------------------------------------------------

def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out, (a, b), back, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def back(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, (a, b), back, "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    out = x.data * x.data.dtype.type(factor)

    def back(g):
        _accumulate(x, g * x.data.dtype.type(factor))

    return _node(out, (x,), back, "scale")


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity, ``kind`` in {"relu", "sigmoid"}."""
    if kind == "relu":
        out = np.maximum(x.data, 0)

        def back(g):
            _accumulate(x, g * (x.data > 0))

        return _node(out, (x,), back, "relu")
    if kind == "sigmoid":
        # Split by sign so exp never overflows.
        d = x.data
        out = np.empty_like(d)
        pos = d >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
        ed = np.exp(d[~pos])
        out[~pos] = ed / (1.0 + ed)

        def back(g):
            _accumulate(x, g * out * (1.0 - out))

        return _node(out, (x,), back, "sigmoid")
    raise ValueError(f"unknown activation kind {kind!r}; use 'relu' or 'sigmoid'")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


# ---------------------------------------------------------------------------
# convolution and normalization
# ---------------------------------------------------------------------------

def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation over (n, c, h, w) input with an (o, c, kh, kw) kernel."""
    if x.data.ndim != 4:
        raise ShapeError("ndim", 4, x.data.ndim, "conv2d input")
    if weight.data.ndim != 4:
        raise ShapeError("ndim", 4, weight.data.ndim, "conv2d weight")
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"conv2d padding must be >= 0, got {padding}")
    n, c, h, w = x.data.shape
    c_out, c_in, kh, kw = weight.data.shape
    if c != c_in:
        raise ShapeError("channel", c_in, c, "conv2d input channels")
    if bias is not None and bias.data.shape != (c_out,):
        raise ShapeError("bias", (c_out,), bias.data.shape, "conv2d bias")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out < 1:
        raise ShapeError("height", f">= {kh - 2 * padding}", h, "conv2d output would be empty")
    if w_out < 1:
        raise ShapeError("width", f">= {kw - 2 * padding}", w, "conv2d output would be empty")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, c_in, h_out, w_out, kh, kw)
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias.data.reshape(1, c_out, 1, 1)

    def back(g):
        if weight.requires_grad:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
            _accumulate(weight, gw)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0]))
                    gxp[:, :, i:i + stride * h_out:stride,
                        j:j + stride * w_out:stride] += contrib.transpose(0, 3, 1, 2)
            if padding:
                gxp = gxp[:, :, padding:padding + h, padding:padding + w]
            _accumulate(x, gxp)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out, parents, back, "conv2d")


class RunningStats:
    """Per-channel running mean/variance consumed by batchnorm in eval mode."""

    def __init__(self, channels: int, dtype=None):
        dt = dtype or _DEFAULT_DTYPE
        self.mean = np.zeros(channels, dtype=dt)
        self.var = np.ones(channels, dtype=dt)

    @property
    def channels(self) -> int:
        return self.mean.shape[0]


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, stats: RunningStats,
              training: bool, eps: float = 1e-5, momentum: float = 0.1) -> Tensor:
    """Channelwise batch normalization over (n, h, w).

    Train mode normalizes by batch statistics and updates ``stats``; eval mode
    normalizes by the running statistics and leaves them untouched.
    """
    if x.data.ndim != 4:
        raise ShapeError("ndim", 4, x.data.ndim, "batchnorm input")
    n, c, h, w = x.data.shape
    for name, t in (("gamma", gamma), ("beta", beta)):
        if t.data.shape != (c,):
            raise ShapeError(name, (c,), t.data.shape, "batchnorm parameters")
    if stats.channels != c:
        raise ShapeError("running_stats", c, stats.channels, "batchnorm running stats")
    axes = (0, 2, 3)
    if training:
        m = n * h * w
        if m < 2:
            raise ShapeError("n*h*w", ">= 2", m, "batchnorm train mode needs two samples per channel")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)  # biased, used for normalization
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
        stats.mean = ((1.0 - momentum) * stats.mean + momentum * mean).astype(stats.mean.dtype)
        unbiased = var * (m / (m - 1))
        stats.var = ((1.0 - momentum) * stats.var + momentum * unbiased).astype(stats.var.dtype)
        out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

        def back(g):
            if gamma.requires_grad:
                _accumulate(gamma, (g * xhat).sum(axis=axes))
            if beta.requires_grad:
                _accumulate(beta, g.sum(axis=axes))
            if x.requires_grad:
                gsum = g.sum(axis=axes, keepdims=True)
                gx_sum = (g * xhat).sum(axis=axes, keepdims=True)
                coeff = (gamma.data * inv_std).reshape(1, c, 1, 1)
                _accumulate(x, coeff * (g - gsum / m - xhat * gx_sum / m))

        return _node(out, (x, gamma, beta), back, "batchnorm")

    inv_std = 1.0 / np.sqrt(stats.var + eps)
    xhat = (x.data - stats.mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

    def back_eval(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=axes))
        if x.requires_grad:
            _accumulate(x, g * (gamma.data * inv_std).reshape(1, c, 1, 1))

    return _node(out, (x, gamma, beta), back_eval, "batchnorm")


# ---------------------------------------------------------------------------
# rearrangements
# ---------------------------------------------------------------------------

def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (n, c*r*r, h, w) into (n, c, h*r, w*r); a bijection on elements."""
    if r < 1:
        raise ValueError(f"pixel_shuffle factor must be >= 1, got {r}")
    n, c, h, w = x.data.shape
    if c % (r * r) != 0:
        raise ShapeError("channel", f"divisible by {r * r}", c, "pixel_shuffle")
    c_out = c // (r * r)
    out = (x.data.reshape(n, c_out, r, r, h, w)
           .transpose(0, 1, 4, 2, 5, 3)
           .reshape(n, c_out, h * r, w * r))
    out = np.ascontiguousarray(out)

    def back(g):
        _accumulate(x, _unshuffle_data(g, r))

    return _node(out, (x,), back, "pixel_shuffle")


def _unshuffle_data(data: np.ndarray, r: int) -> np.ndarray:
    n, c, hr, wr = data.shape
    h, w = hr // r, wr // r
    return np.ascontiguousarray(
        data.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    if r < 1:
        raise ValueError(f"pixel_unshuffle factor must be >= 1, got {r}")
    n, c, h, w = x.data.shape
    if h % r != 0:
        raise ShapeError("height", f"divisible by {r}", h, "pixel_unshuffle")
    if w % r != 0:
        raise ShapeError("width", f"divisible by {r}", w, "pixel_unshuffle")
    out = _unshuffle_data(x.data, r)

    def back(g):
        gn, gc, gh, gw = g.shape
        c_out = gc // (r * r)
        _accumulate(x, np.ascontiguousarray(
            g.reshape(gn, c_out, r, r, gh, gw).transpose(0, 1, 4, 2, 5, 3)
            .reshape(gn, c_out, gh * r, gw * r)))

    return _node(out, (x,), back, "pixel_unshuffle")


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel axis; all parts must share n, h, w."""
    if len(parts) == 0:
        raise ValueError("concat_channels needs at least one part")
    first = parts[0].data.shape
    for k, p in enumerate(parts[1:], start=1):
        s = p.data.shape
        if s[0] != first[0]:
            raise ShapeError("batch", first[0], s[0], f"concat_channels part {k}")
        if s[2] != first[2]:
            raise ShapeError("height", first[2], s[2], f"concat_channels part {k}")
        if s[3] != first[3]:
            raise ShapeError("width", first[3], s[3], f"concat_channels part {k}")
    out = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.data.shape[1] for p in parts])

    def back(g):
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _accumulate(p, g[:, start:stop])

    return _node(out, tuple(parts), back, "concat_channels")


def concat_batch(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the leading axis; used to stack per-model score maps."""
    if len(parts) == 0:
        raise ValueError("concat_batch needs at least one part")
    tail = parts[0].data.shape[1:]
    for k, p in enumerate(parts[1:], start=1):
        if p.data.shape[1:] != tail:
            raise ShapeError("trailing dims", tail, p.data.shape[1:], f"concat_batch part {k}")
    out = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def back(g):
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _accumulate(p, g[start:stop])

    return _node(out, tuple(parts), back, "concat_batch")


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Take channels [start, stop); the exact inverse of concatenation."""
    c = x.data.shape[1]
    if not (0 <= start < stop <= c):
        raise ShapeError("channel", f"0 <= {start} < {stop} <= c", c, "slice_channels")
    out = np.ascontiguousarray(x.data[:, start:stop])

    def back(g):
        if x.requires_grad:
            buf = np.zeros_like(x.data)
            buf[:, start:stop] = g
            _accumulate(x, buf)

    return _node(out, (x,), back, "slice_channels")


def crop_spatial(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    """Take the spatial window [top:top+height, left:left+width]."""
    n, c, h, w = x.data.shape
    if not (0 <= top and top + height <= h):
        raise ShapeError("height", f"window within {h}", (top, height), "crop_spatial")
    if not (0 <= left and left + width <= w):
        raise ShapeError("width", f"window within {w}", (left, width), "crop_spatial")
    out = np.ascontiguousarray(x.data[:, :, top:top + height, left:left + width])

    def back(g):
        if x.requires_grad:
            buf = np.zeros_like(x.data)
            buf[:, :, top:top + height, left:left + width] = g
            _accumulate(x, buf)

    return _node(out, (x,), back, "crop_spatial")


def reflect_pad(x: Tensor, pad_bottom: int, pad_right: int) -> Tensor:
    """Mirror-pad (without repeating the border) at the bottom/right edges."""
    if pad_bottom < 0 or pad_right < 0:
        raise ValueError("reflect_pad amounts must be >= 0")
    n, c, h, w = x.data.shape
    if pad_bottom >= h or pad_right >= w:
        raise ShapeError("padding", f"< ({h}, {w})", (pad_bottom, pad_right),
                         "reflect_pad exceeds input size")
    iy = np.concatenate([np.arange(h), h - 2 - np.arange(pad_bottom)])
    ix = np.concatenate([np.arange(w), w - 2 - np.arange(pad_right)])
    out = np.ascontiguousarray(x.data[:, :, iy[:, None], ix[None, :]])

    def back(g):
        if x.requires_grad:
            buf = np.zeros_like(x.data)
            np.add.at(buf, (slice(None), slice(None), iy[:, None], ix[None, :]), g)
            _accumulate(x, buf)

    return _node(out, (x,), back, "reflect_pad")


# ---------------------------------------------------------------------------
# model-axis ops (ensemble fusion)
# ---------------------------------------------------------------------------

def softmax_over_models(stacked: Tensor) -> Tensor:
    """Softmax along the leading (model) axis of an (N, 1, h, w) stack.

    Stabilized by max subtraction, so adding a per-location constant to all N
    scores leaves the output unchanged.
    """
    if stacked.data.ndim != 4:
        raise ShapeError("ndim", 4, stacked.data.ndim, "softmax_over_models")
    if stacked.data.shape[0] < 1:
        raise ShapeError("models", ">= 1", stacked.data.shape[0], "softmax_over_models")
    if stacked.data.shape[1] != 1:
        raise ShapeError("channel", 1, stacked.data.shape[1], "softmax_over_models")
    z = stacked.data - stacked.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=0, keepdims=True)

    def back(g):
        if stacked.requires_grad:
            dot = (g * out).sum(axis=0, keepdims=True)
            _accumulate(stacked, out * (g - dot))

    return _node(out, (stacked,), back, "softmax_over_models")


def sum_over_models(x: Tensor) -> Tensor:
    """Sum the leading axis down to 1, keeping rank 4."""
    out = x.data.sum(axis=0, keepdims=True)

    def back(g):
        if x.requires_grad:
            _accumulate(x, np.broadcast_to(g, x.data.shape).copy())

    return _node(out, (x,), back, "sum_over_models")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate each pixel into a factor-by-factor constant block."""
    if factor < 1:
        raise ValueError(f"upsample_nearest factor must be >= 1, got {factor}")
    if factor == 1:
        out = x.data.copy()

        def back_id(g):
            _accumulate(x, g)

        return _node(out, (x,), back_id, "upsample_nearest")
    out = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def back(g):
        if x.requires_grad:
            n, c, hf, wf = g.shape
            h, w = hf // factor, wf // factor
            _accumulate(x, g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)))

    return _node(out, (x,), back, "upsample_nearest")


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes, keeping shape (n, c, 1, 1)."""
    n, c, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def back(g):
        if x.requires_grad:
            _accumulate(x, np.broadcast_to(g / (h * w), x.data.shape).copy())

    return _node(out, (x,), back, "global_avg_pool")


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def loss(pred: Tensor, target: Tensor, kind: str) -> Tensor:
    """Mean absolute (l1) or mean squared (mse) error over all elements; scalar output."""
    if pred.data.shape != target.data.shape:
        raise ShapeError("shape", pred.data.shape, target.data.shape, "loss operands")
    diff = pred.data - target.data
    n = diff.size
    if kind == "l1":
        value = np.abs(diff).mean(dtype=diff.dtype)

        def back(g):
            gd = g.reshape(()) * np.sign(diff) / n
            _accumulate(pred, gd)
            _accumulate(target, -gd)

        op = "l1_loss"
    elif kind == "mse":
        value = np.mean(diff * diff, dtype=diff.dtype)

        def back(g):
            gd = g.reshape(()) * (2.0 * diff) / n
            _accumulate(pred, gd)
            _accumulate(target, -gd)

        op = "mse_loss"
    else:
        raise ValueError(f"unknown loss kind {kind!r}; use 'l1' or 'mse'")
    out = np.asarray(value, dtype=diff.dtype).reshape(1, 1, 1, 1)
    return _node(out, (pred, target), back, op)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    return loss(pred, target, "l1")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    return loss(pred, target, "mse")
