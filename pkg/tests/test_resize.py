"""Bicubic resampling against the closed-form Catmull-Rom kernel."""

import numpy as np
import pytest

from vsrkit.errors import ShapeError
from vsrkit.resize import bicubic_downsample, bicubic_resize, bicubic_upsample
from vsrkit.tensor import Tensor


def kernel_oracle(x):
    """Catmull-Rom weight, written out directly from the piecewise formula."""
    a = -0.5
    x = abs(float(x))
    if x <= 1.0:
        return (a + 2) * x ** 3 - (a + 3) * x ** 2 + 1
    if x < 2.0:
        return a * x ** 3 - 5 * a * x ** 2 + 8 * a * x - 4 * a
    return 0.0


def upsample_point_oracle(row, j, factor=4):
    """One output sample of a 1-D upscale, computed straight from the kernel."""
    u = (j + 0.5) / factor - 0.5
    base = int(np.floor(u))
    frac = u - base
    acc = 0.0
    for o in (-1, 0, 1, 2):
        idx = min(max(base + o, 0), len(row) - 1)
        acc += kernel_oracle(frac - o) * row[idx]
    return acc


class TestUpsample:
    def test_constant_stays_constant(self):
        img = Tensor(np.full((1, 3, 6, 6), 0.37, dtype=np.float32))
        out = bicubic_upsample(img)
        assert out.data.shape == (1, 3, 24, 24)
        np.testing.assert_allclose(out.data, 0.37, atol=1e-5)

    def test_single_pixel_becomes_constant_block(self):
        img = Tensor(np.full((1, 3, 1, 1), 0.8, dtype=np.float32))
        out = bicubic_upsample(img)
        assert out.data.shape == (1, 3, 4, 4)
        np.testing.assert_allclose(out.data, 0.8, atol=1e-6)

    def test_interior_samples_match_kernel_formula(self):
        rng = np.random.default_rng(0)
        row = rng.random(12)
        img = Tensor(np.tile(row.astype(np.float32), (1, 1, 8, 1)))
        out = bicubic_upsample(img).data[0, 0, 16]  # an interior output row
        for j in range(8, 40):  # stay away from clamped edges
            assert out[j] == pytest.approx(upsample_point_oracle(row, j), abs=2e-5)

    def test_ramp_overshoot_within_catmull_rom_bound(self):
        ramp = np.linspace(0.0, 1.0, 16, dtype=np.float32)
        img = Tensor(np.tile(ramp, (1, 3, 16, 1)))
        out = bicubic_upsample(img).data
        lo, hi = 0.0, 1.0
        bound = 0.125 * (hi - lo)
        assert out.min() >= lo - bound - 1e-6
        assert out.max() <= hi + bound + 1e-6


class TestDownsample:
    def test_constant_quarter_size(self):
        img = Tensor(np.full((1, 3, 8, 8), 0.2, dtype=np.float32))
        out = bicubic_downsample(img)
        assert out.data.shape == (1, 3, 2, 2)
        np.testing.assert_allclose(out.data, 0.2, atol=1e-6)

    def test_round_trip_of_nearest_upsample_recovers(self):
        rng = np.random.default_rng(1)
        lr = rng.random((1, 3, 6, 5), dtype=np.float32)
        up = np.repeat(np.repeat(lr, 4, axis=2), 4, axis=3)
        back = bicubic_downsample(Tensor(up))
        np.testing.assert_allclose(back.data, lr, atol=1e-5)

    def test_indivisible_dims_rejected(self):
        with pytest.raises(ShapeError):
            bicubic_downsample(Tensor(np.zeros((1, 3, 10, 8), np.float32)))

    def test_unsupported_factor_rejected(self):
        with pytest.raises(ValueError):
            bicubic_resize(Tensor(np.zeros((1, 3, 8, 8), np.float32)), 2)
