"""Gradient correctness for every differentiable op, plus backward semantics."""

import numpy as np
import pytest

from gradcheck import F32, F64, assert_grads_match
from vsrkit.errors import ShapeError
from vsrkit.models import build_adapted_net, toy_config
from vsrkit.optim import (OptimizerState, advance_schedule, optimizer_step,
                          schedule_lr)
from vsrkit.tensor import (RunningStats, Tensor, add, backward, batchnorm,
                           concat_batch, concat_channels, conv2d, crop_spatial,
                           global_avg_pool, loss, mul, no_grad, pixel_shuffle,
                           pixel_unshuffle, reflect_pad, relu, scale,
                           sigmoid, slice_channels, softmax_over_models,
                           sum_over_models, upsample_nearest, using_dtype)


def _rand(rng, shape, lo=-1.0, hi=1.0):
    # Keep values away from relu/l1 kinks, and keep magnitudes modest so the
    # 32-bit finite-difference quotient stays well inside the tolerance floor.
    data = rng.uniform(lo, hi, size=shape)
    data = np.where(np.abs(data) < 0.05, data + 0.1, data) * 0.5
    return data.astype(np.float64 if _F64_MODE else np.float32)


_F64_MODE = False


def _check_everywhere(make_case, n_cases=5, seed0=100, f64=False, label=""):
    global _F64_MODE
    tol = F64 if f64 else F32
    _F64_MODE = f64
    if f64:
        with using_dtype(np.float64):
            for k in range(n_cases):
                build, params = make_case(np.random.default_rng(seed0 + k))
                assert_grads_match(build, params, label=f"{label}[{k}]", **tol)
    else:
        for k in range(n_cases):
            build, params = make_case(np.random.default_rng(seed0 + k))
            assert_grads_match(build, params, label=f"{label}[{k}]", **tol)
    _F64_MODE = False


def _target_for(shape, rng):
    return Tensor(_rand(rng, shape) + 0.1)


# -- op cases ----------------------------------------------------------------

def case_conv(rng):
    x = Tensor(_rand(rng, (2, 2, 5, 5)), requires_grad=True)
    w = Tensor(_rand(rng, (3, 2, 3, 3)) * 0.5, requires_grad=True)
    b = Tensor(_rand(rng, (3,)) * 0.2, requires_grad=True)
    t = _target_for((2, 3, 5, 5), rng)
    return (lambda: loss(conv2d(x, w, b, 1, 1), t, "mse")), [x, w, b]


def case_conv_strided(rng):
    x = Tensor(_rand(rng, (1, 2, 6, 6)), requires_grad=True)
    w = Tensor(_rand(rng, (2, 2, 2, 2)) * 0.5, requires_grad=True)
    b = Tensor(_rand(rng, (2,)) * 0.2, requires_grad=True)
    t = _target_for((1, 2, 3, 3), rng)
    return (lambda: loss(conv2d(x, w, b, 2, 0), t, "mse")), [x, w, b]


def case_batchnorm_train(rng):
    x = Tensor(_rand(rng, (3, 2, 3, 3)), requires_grad=True)
    g = Tensor(_rand(rng, (2,)) + 1.0, requires_grad=True)
    b = Tensor(_rand(rng, (2,)), requires_grad=True)
    t = _target_for((3, 2, 3, 3), rng)

    def build():
        return loss(batchnorm(x, g, b, RunningStats(2, x.data.dtype), True), t, "mse")

    return build, [x, g, b]


def case_batchnorm_eval(rng):
    x = Tensor(_rand(rng, (2, 2, 3, 3)), requires_grad=True)
    g = Tensor(_rand(rng, (2,)) + 1.0, requires_grad=True)
    b = Tensor(_rand(rng, (2,)), requires_grad=True)
    stats = RunningStats(2, x.data.dtype)
    stats.mean += 0.3
    stats.var += 0.5
    t = _target_for((2, 2, 3, 3), rng)
    return (lambda: loss(batchnorm(x, g, b, stats, False), t, "mse")), [x, g, b]


def case_relu(rng):
    x = Tensor(_rand(rng, (2, 3, 4, 4)), requires_grad=True)
    t = _target_for((2, 3, 4, 4), rng)
    return (lambda: loss(relu(x), t, "mse")), [x]


def case_sigmoid(rng):
    x = Tensor(_rand(rng, (2, 2, 3, 3)) * 2, requires_grad=True)
    t = _target_for((2, 2, 3, 3), rng)
    return (lambda: loss(sigmoid(x), t, "mse")), [x]


def case_pixel_shuffle(rng):
    x = Tensor(_rand(rng, (1, 8, 3, 3)), requires_grad=True)
    t = _target_for((1, 2, 6, 6), rng)
    return (lambda: loss(pixel_shuffle(x, 2), t, "mse")), [x]


def case_pixel_unshuffle(rng):
    x = Tensor(_rand(rng, (1, 2, 6, 6)), requires_grad=True)
    t = _target_for((1, 8, 3, 3), rng)
    return (lambda: loss(pixel_unshuffle(x, 2), t, "mse")), [x]


def case_concat_slice(rng):
    a = Tensor(_rand(rng, (1, 2, 3, 3)), requires_grad=True)
    b = Tensor(_rand(rng, (1, 3, 3, 3)), requires_grad=True)
    t = _target_for((1, 4, 3, 3), rng)

    def build():
        return loss(slice_channels(concat_channels([a, b]), 1, 5), t, "mse")

    return build, [a, b]


def case_concat_batch(rng):
    a = Tensor(_rand(rng, (1, 1, 3, 3)), requires_grad=True)
    b = Tensor(_rand(rng, (2, 1, 3, 3)), requires_grad=True)
    t = _target_for((3, 1, 3, 3), rng)
    return (lambda: loss(concat_batch([a, b]), t, "mse")), [a, b]


def case_crop_pad(rng):
    x = Tensor(_rand(rng, (1, 2, 5, 5)), requires_grad=True)
    t = _target_for((1, 2, 6, 7), rng)

    def build():
        padded = reflect_pad(x, 1, 2)
        return loss(padded, t, "mse")

    return build, [x]


def case_crop(rng):
    x = Tensor(_rand(rng, (1, 2, 5, 6)), requires_grad=True)
    t = _target_for((1, 2, 3, 4), rng)
    return (lambda: loss(crop_spatial(x, 1, 2, 3, 4), t, "mse")), [x]


def case_softmax(rng):
    x = Tensor(_rand(rng, (4, 1, 3, 3)) * 2, requires_grad=True)
    t = _target_for((4, 1, 3, 3), rng)
    return (lambda: loss(softmax_over_models(x), t, "mse")), [x]


def case_sum_models(rng):
    x = Tensor(_rand(rng, (3, 2, 2, 2)), requires_grad=True)
    t = _target_for((1, 2, 2, 2), rng)
    return (lambda: loss(sum_over_models(x), t, "mse")), [x]


def case_upsample(rng):
    x = Tensor(_rand(rng, (1, 2, 3, 3)), requires_grad=True)
    t = _target_for((1, 2, 6, 6), rng)
    return (lambda: loss(upsample_nearest(x, 2), t, "mse")), [x]


def case_gap(rng):
    x = Tensor(_rand(rng, (2, 3, 4, 4)), requires_grad=True)
    t = _target_for((2, 3, 1, 1), rng)
    return (lambda: loss(global_avg_pool(x), t, "mse")), [x]


def case_add_mul_broadcast(rng):
    x = Tensor(_rand(rng, (2, 3, 4, 4)), requires_grad=True)
    gate = Tensor(_rand(rng, (2, 3, 1, 1)), requires_grad=True)
    bias = Tensor(_rand(rng, (1, 3, 1, 1)), requires_grad=True)
    t = _target_for((2, 3, 4, 4), rng)
    return (lambda: loss(add(mul(x, gate), bias), t, "mse")), [x, gate, bias]


def case_scale(rng):
    x = Tensor(_rand(rng, (1, 2, 3, 3)), requires_grad=True)
    t = _target_for((1, 2, 3, 3), rng)
    return (lambda: loss(scale(x, 0.1), t, "mse")), [x]


def case_l1(rng):
    x = Tensor(_rand(rng, (2, 2, 3, 3)), requires_grad=True)
    # keep |pred - target| well clear of the l1 kink for the fd window
    offs = rng.uniform(0.2, 0.6, size=x.data.shape) * rng.choice([-1.0, 1.0], x.data.shape)
    t = Tensor((x.data + offs).astype(x.data.dtype))
    return (lambda: loss(x, t, "l1")), [x]


def case_mse(rng):
    x = Tensor(_rand(rng, (2, 2, 3, 3)), requires_grad=True)
    t = Tensor(_rand(rng, (2, 2, 3, 3)) + 0.5)
    return (lambda: loss(x, t, "mse")), [x]


ALL_OP_CASES = {
    "conv2d": case_conv,
    "conv2d_strided": case_conv_strided,
    "batchnorm_train": case_batchnorm_train,
    "batchnorm_eval": case_batchnorm_eval,
    "relu": case_relu,
    "sigmoid": case_sigmoid,
    "pixel_shuffle": case_pixel_shuffle,
    "pixel_unshuffle": case_pixel_unshuffle,
    "concat_slice": case_concat_slice,
    "concat_batch": case_concat_batch,
    "reflect_pad": case_crop_pad,
    "crop_spatial": case_crop,
    "softmax_over_models": case_softmax,
    "sum_over_models": case_sum_models,
    "upsample_nearest": case_upsample,
    "global_avg_pool": case_gap,
    "add_mul_broadcast": case_add_mul_broadcast,
    "scale": case_scale,
    "l1_loss": case_l1,
    "mse_loss": case_mse,
}


@pytest.mark.parametrize("name", sorted(ALL_OP_CASES))
def test_op_gradients_f32(name):
    _check_everywhere(ALL_OP_CASES[name], n_cases=5, label=name)


@pytest.mark.parametrize("name", ["conv2d", "batchnorm_train", "sigmoid",
                                  "softmax_over_models", "l1_loss"])
def test_op_gradients_f64_tight(name):
    _check_everywhere(ALL_OP_CASES[name], n_cases=3, f64=True, label=name)


def test_composite_conv_bn_relu_pipeline():
    """conv -> bn -> relu -> loss at eps=1e-3, within 1e-2 rel / 1e-4 abs.

    Finite differences are only a valid oracle away from relu kinks, so seeds
    whose pre-activations fall inside the fd window are skipped (the scan is
    deterministic; the first three clean cases are checked).
    """
    checked = 0
    candidate = 0
    while checked < 3:
        rng = np.random.default_rng(2000 + candidate)
        candidate += 1
        assert candidate < 200, "could not find three kink-free cases"
        x = Tensor(_rand(rng, (2, 2, 5, 5)), requires_grad=True)
        w = Tensor(_rand(rng, (3, 2, 3, 3)) * 0.5, requires_grad=True)
        b = Tensor(_rand(rng, (3,)) * 0.2, requires_grad=True)
        g = Tensor(_rand(rng, (3,)) + 1.2, requires_grad=True)
        beta = Tensor(_rand(rng, (3,)), requires_grad=True)
        t = _target_for((2, 3, 5, 5), rng)

        def build():
            stats = RunningStats(3, x.data.dtype)
            return loss(relu(batchnorm(conv2d(x, w, b, 1, 1), g, beta, stats, True)),
                        t, "mse")

        with no_grad():
            pre = batchnorm(conv2d(x, w, b, 1, 1), g, beta,
                            RunningStats(3, x.data.dtype), True)
        # Normalization amplifies weight perturbations by 1/std, so the
        # kink-free margin must be a generous multiple of the fd step.
        if np.abs(pre.data).min() < 2e-2:
            continue
        assert_grads_match(build, [x, w, b, g, beta], eps=1e-3, rel=1e-2,
                           floor=1e-4, label=f"conv_bn_relu[{checked}]")
        checked += 1


def test_sigmoid_gradient_finite_difference_rel():
    rng = np.random.default_rng(0)
    x = Tensor((rng.uniform(-2, 2, (1, 1, 2, 4)) + 0.1).astype(np.float32),
               requires_grad=True)
    out = loss(sigmoid(x), Tensor(np.zeros((1, 1, 2, 4), np.float32)), "mse")
    backward(out)
    analytic = x.grad.copy()
    eps = 1e-3
    for idx in np.ndindex(x.data.shape):
        orig = x.data[idx]
        x.data[idx] = orig + eps
        up = loss(sigmoid(x), Tensor(np.zeros((1, 1, 2, 4), np.float32)), "mse").item()
        x.data[idx] = orig - eps
        dn = loss(sigmoid(x), Tensor(np.zeros((1, 1, 2, 4), np.float32)), "mse").item()
        x.data[idx] = orig
        num = (up - dn) / (2 * eps)
        assert abs(analytic[idx] - num) <= 1e-3 * max(1.0, abs(num))


# -- backward semantics -------------------------------------------------------

def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6, dtype=np.float32).reshape(1, 1, 2, 3), requires_grad=True)
    total = loss(x, Tensor(np.zeros_like(x.data)), "l1") * float(x.data.size)
    backward(total)
    np.testing.assert_allclose(x.grad, np.sign(x.data), atol=1e-6)


def test_backward_requires_scalar_root():
    x = Tensor(np.zeros((1, 1, 2, 2), np.float32), requires_grad=True)
    y = relu(x)
    with pytest.raises(ShapeError):
        backward(y)


def test_disconnected_parameter_gets_zero_grad():
    used = Tensor(np.ones((1, 1, 2, 2), np.float32), requires_grad=True)
    unused = Tensor(np.ones((1, 1, 2, 2), np.float32), requires_grad=True)
    out = loss(used, Tensor(np.zeros((1, 1, 2, 2), np.float32)), "mse")
    backward(out, params=[used, unused])
    assert unused.grad is not None
    np.testing.assert_array_equal(unused.grad, 0.0)
    assert np.any(used.grad != 0.0)


def test_grad_accumulates_across_uses():
    x = Tensor(np.full((1, 1, 1, 1), 2.0, np.float32), requires_grad=True)
    y = add(x, x)  # dy/dx = 2
    out = loss(y, Tensor(np.zeros((1, 1, 1, 1), np.float32)), "mse")
    backward(out)
    # d/dx (2x)^2 = 8x = 16
    assert x.grad.ravel()[0] == pytest.approx(16.0)


def test_no_grad_blocks_recording():
    x = Tensor(np.ones((1, 1, 2, 2), np.float32), requires_grad=True)
    with no_grad():
        y = relu(x)
    assert not y.requires_grad


def test_end_to_end_toy_net_gradcheck():
    """Two-block net, full parameter gradient vs finite differences (f32 + f64).

    A small fd step keeps the window clear of the thousands of relu kinks a
    whole network contains; the oracle runs in float64 so the quotient stays
    accurate at that step size.
    """
    for f64 in (False, True):
        eps = 3e-6 if f64 else 1e-5
        tol = dict(eps=eps, rel=F64["rel"], floor=F64["floor"]) if f64 \
            else dict(eps=eps, rel=F32["rel"], floor=F32["floor"])
        ctx = using_dtype(np.float64) if f64 else using_dtype(np.float32)
        with ctx:
            cfg = toy_config("rdn", temporal_radius=0, width=8, num_blocks=2,
                             growth=4, layers_per_block=2)
            model = build_adapted_net(cfg, seed=1)
            rng = np.random.default_rng(11)
            dt = np.float64 if f64 else np.float32
            x = Tensor((rng.random((1, 3, 8, 8)) * 0.8 + 0.1).astype(dt))
            t = Tensor((rng.random((1, 3, 32, 32)) * 0.8 + 0.1).astype(dt))

            def build():
                return loss(model.forward_tensor(x), t, "l1")

            assert_grads_match(build, list(model.params.values()),
                               label=f"toy_net(f64={f64})", **tol)


# -- optimizers ---------------------------------------------------------------

def test_sgd_step_hand_example():
    p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
    p.grad = np.array([0.5], dtype=np.float32)
    state = OptimizerState(kind="sgd", learning_rate=0.1)
    optimizer_step(state, {"p": p})
    assert p.data[0] == pytest.approx(1.0 - 0.1 * 0.5)


def test_adam_matches_reference_formula():
    rng = np.random.default_rng(12)
    p0 = rng.standard_normal(4).astype(np.float32)
    grads = [rng.standard_normal(4).astype(np.float32) for _ in range(3)]
    p = Tensor(p0.copy(), requires_grad=True)
    state = OptimizerState(kind="adam", learning_rate=1e-2)
    ref = p0.astype(np.float64).copy()
    m = np.zeros(4)
    v = np.zeros(4)
    for i, g in enumerate(grads, start=1):
        p.grad = g.copy()
        optimizer_step(state, {"p": p})
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh = m / (1 - 0.9 ** i)
        vh = v / (1 - 0.999 ** i)
        ref -= 1e-2 * mh / (np.sqrt(vh) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-4, atol=1e-6)


def test_sr_schedule_sequence():
    state = OptimizerState(kind="adam", learning_rate=1e-4,
                           schedule=((1, 5e-5), (2, 3e-5), (3, 1e-5)))
    seen = [state.learning_rate]
    while advance_schedule(state):
        seen.append(state.learning_rate)
    assert seen == [1e-4, 5e-5, 3e-5, 1e-5]


def test_ensemble_schedule_by_pass():
    state = OptimizerState(kind="sgd", learning_rate=0.1,
                           schedule=((50, 1e-2), (100, 1e-3)))
    trace = {}
    for p in (1, 50, 51, 100, 101, 200):
        schedule_lr(state, p)
        trace[p] = state.learning_rate
    assert trace[1] == 0.1 and trace[50] == 0.1
    assert trace[51] == 1e-2 and trace[100] == 1e-2
    assert trace[101] == 1e-3 and trace[200] == 1e-3


def test_unused_param_untouched_by_sgd():
    p = Tensor(np.array([3.0], dtype=np.float32), requires_grad=True)
    state = OptimizerState(kind="sgd", learning_rate=0.5)
    optimizer_step(state, {"p": p})  # no grad buffer
    assert p.data[0] == 3.0
