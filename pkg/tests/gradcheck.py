"""Finite-difference gradient oracle shared by the autograd tests.

The oracle is independent of the autodiff path: it re-evaluates the loss as a
plain function of the parameter values and forms central differences. The
oracle evaluations run with parameters upcast to float64 (every float32 value
is exactly representable there), so the difference quotient measures the
gradient rather than 32-bit evaluation round-off; the analytic side is
computed at the tensors' native precision.
"""

import numpy as np

from vsrkit.tensor import backward

F32 = dict(eps=1e-3, rel=1e-2, floor=1e-4)
F64 = dict(eps=3e-6, rel=1e-6, floor=1e-9)


def numerical_grads(loss_fn, tensors, eps):
    """Central finite differences of ``loss_fn()`` w.r.t. each tensor's data."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data, dtype=np.float64)
        flat = t.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = loss_fn()
            flat[i] = orig - eps
            f_minus = loss_fn()
            flat[i] = orig
            gf[i] = (f_plus - f_minus) / (2.0 * eps)
        grads.append(g)
    return grads


def assert_grads_match(build_loss, params, eps, rel, floor, label=""):
    """Backward pass vs the finite-difference oracle, elementwise tolerance."""
    params = list(params)
    for p in params:
        p.grad = None
    root = build_loss()
    backward(root, params=params)
    analytic = [p.grad.copy() for p in params]
    saved = [p.data for p in params]
    for p in params:
        p.data = p.data.astype(np.float64)
    try:
        numeric = numerical_grads(lambda: build_loss().item(), params, eps)
    finally:
        for p, s in zip(params, saved):
            p.data = s
    for k, (a, n) in enumerate(zip(analytic, numeric)):
        err = np.abs(a.astype(np.float64) - n)
        tol = np.maximum(floor, rel * np.maximum(np.abs(a), np.abs(n)))
        worst = float((err - tol).max())
        assert np.all(err <= tol), (
            f"{label} param {k}: max violation {worst:.3e}, "
            f"max abs err {err.max():.3e}, tol floor {floor}")
