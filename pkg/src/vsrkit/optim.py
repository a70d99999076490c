"""Parameter update rules: Adam and plain SGD, with stepped learning-rate schedules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .tensor import Tensor

OPTIMIZER_KINDS = ("adam", "sgd")


@dataclass
class OptimizerState:
    """Mutable optimizer state.

    ``schedule`` is an ordered list of ``(trigger, new_lr)`` pairs. The trigger
    unit belongs to the caller: epoch counts for stepped schedules (applied via
    :func:`schedule_lr`) or plateau events (applied via :func:`advance_schedule`).
    """

    kind: str = "adam"
    learning_rate: float = 1e-4
    schedule: tuple = ()
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    schedule_pos: int = 0
    moments: dict = field(default_factory=dict)

    def __post_init__(self):
        problems = []
        if self.kind not in OPTIMIZER_KINDS:
            problems.append(f"kind must be one of {OPTIMIZER_KINDS}, got {self.kind!r}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if problems:
            raise ConfigError(problems)


def advance_schedule(state: OptimizerState) -> bool:
    """Move to the next scheduled learning rate; True if one was applied."""
    if state.schedule_pos >= len(state.schedule):
        return False
    _, lr = state.schedule[state.schedule_pos]
    state.learning_rate = float(lr)
    state.schedule_pos += 1
    return True


def schedule_lr(state: OptimizerState, trigger_value: int) -> None:
    """Apply every schedule entry whose trigger has been passed.

    An entry ``(k, lr)`` takes effect once ``trigger_value`` exceeds ``k``
    (e.g. a rate that drops after epoch 50 applies from epoch 51 on).
    """
    while (state.schedule_pos < len(state.schedule)
           and trigger_value > state.schedule[state.schedule_pos][0]):
        advance_schedule(state)


def optimizer_step(state: OptimizerState, params: Mapping[str, Tensor],
                   grads: Mapping[str, np.ndarray] | None = None) -> Mapping[str, Tensor]:
    """Update ``params`` in place from their gradients and return them.

    With ``grads`` omitted, each parameter's own ``.grad`` buffer is used;
    parameters whose gradient is missing are left untouched.
    """
    state.step_count += 1
    lr = state.learning_rate
    for name, p in params.items():
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            continue
        g = np.asarray(g, dtype=p.data.dtype)
        if g.shape != p.data.shape:
            raise ConfigError([f"gradient for {name!r} has shape {g.shape}, parameter {p.data.shape}"])
        if state.kind == "sgd":
            p.data -= lr * g
            continue
        m, v = state.moments.get(name, (None, None))
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.moments[name] = (m, v)
        mhat = m / (1.0 - state.beta1 ** state.step_count)
        vhat = v / (1.0 - state.beta2 ** state.step_count)
        p.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype)
    return params


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    """Scale every gradient so the joint L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= p.grad.dtype.type(factor)
    return norm


def sr_training_schedule() -> tuple:
    """Plateau-advanced rate sequence used when adapting the SR backbones."""
    return ((1, 5e-5), (2, 3e-5), (3, 1e-5))


def ensemble_training_schedule() -> tuple:
    """Stepped rate sequence for ensemble training: tenfold drop after epochs 50 and 100."""
    return ((50, 1e-2), (100, 1e-3))
