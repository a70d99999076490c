"""The 16-transform group: enumeration, inverses, closure, sampling, self-ensemble."""

import numpy as np
import pytest

from vsrkit.augment import (GeoTransform, apply, apply_spatial,
                            enumerate_self_ensemble, invert_output,
                            sample_train_augmentation, self_ensemble_infer)
from vsrkit.errors import ShapeError
from vsrkit.temporal import SuperImage
from vsrkit.tensor import Tensor


def _generic_super_image(radius=2, h=6, w=6, seed=0):
    rng = np.random.default_rng(seed)
    c = 3 * (2 * radius + 1)
    return SuperImage(Tensor(rng.random((1, c, h, w), dtype=np.float32)),
                      t=0, radius=radius)


class TestEnumeration:
    def test_sixteen_distinct_identity_first(self):
        ts = enumerate_self_ensemble()
        assert len(ts) == 16
        assert len(set(ts)) == 16
        assert ts[0].is_identity

    def test_actions_pairwise_distinct_on_generic_image(self):
        s = _generic_super_image()
        images = [apply(t, s).tensor.data.tobytes() for t in enumerate_self_ensemble()]
        assert len(set(images)) == 16

    def test_spatial_eight_reproduce_dihedral_arrangements(self):
        # 2x2 marker [[a, b], [c, d]]; all 8 arrangements enumerated by hand.
        a, b, c, d = 1.0, 2.0, 3.0, 4.0
        marker = np.array([[a, b], [c, d]], dtype=np.float32).reshape(1, 1, 2, 2)
        img = Tensor(np.tile(marker, (1, 3, 1, 1)))
        spatial = [t for t in enumerate_self_ensemble() if not t.tflip]
        got = {tuple(apply_spatial(t, img).data[0, 0].ravel()) for t in spatial}
        want = {
            (a, b, c, d),  # identity
            (c, d, a, b),  # vflip
            (b, a, d, c),  # hflip
            (d, c, b, a),  # vflip+hflip (180 rotation)
            (b, d, a, c),  # rot90 (counterclockwise)
            (d, b, c, a),  # vflip then rot90
            (a, c, b, d),  # hflip then rot90
            (c, a, d, b),  # 180 then rot90 (i.e. rot270)
        }
        assert got == want


class TestApplyInvert:
    def test_identity_unchanged(self):
        s = _generic_super_image()
        out = apply(GeoTransform(), s)
        np.testing.assert_array_equal(out.tensor.data, s.tensor.data)

    def test_hflip_is_involution(self):
        s = _generic_super_image(seed=1)
        t = GeoTransform(hflip=True)
        twice = apply(t, apply(t, s))
        np.testing.assert_array_equal(twice.tensor.data, s.tensor.data)

    def test_tflip_reverses_frame_blocks(self):
        blocks = [Tensor(np.full((1, 3, 4, 4), float(v), dtype=np.float32))
                  for v in (1, 2, 3, 4, 5)]
        s = SuperImage(Tensor(np.concatenate([b.data for b in blocks], axis=1)),
                       t=0, radius=2)
        out = apply(GeoTransform(tflip=True), s)
        for k, v in enumerate([5, 4, 3, 2, 1]):
            np.testing.assert_array_equal(out.tensor.data[:, 3 * k:3 * k + 3], float(v))

    def test_round_trip_bit_exact_for_all_sixteen(self):
        rng = np.random.default_rng(2)
        img = Tensor(rng.random((1, 3, 8, 8), dtype=np.float32))
        for t in enumerate_self_ensemble():
            back = invert_output(t, apply_spatial(t, img))
            np.testing.assert_array_equal(back.data, img.data)

    def test_rot90_inverse_is_three_applications(self):
        rng = np.random.default_rng(3)
        img = Tensor(rng.random((1, 3, 5, 5), dtype=np.float32))
        r = GeoTransform(rot90=True)
        thrice = apply_spatial(r, apply_spatial(r, apply_spatial(r, img)))
        np.testing.assert_array_equal(invert_output(r, img).data, thrice.data)

    def test_random_chain_inverts_in_reverse_order(self):
        rng = np.random.default_rng(4)
        img = Tensor(rng.random((1, 3, 6, 6), dtype=np.float32))
        all16 = enumerate_self_ensemble()
        chain = [all16[int(rng.integers(16))] for _ in range(5)]
        out = img
        for t in chain:
            out = apply_spatial(t, out)
        for t in reversed(chain):
            out = invert_output(t, out)
        np.testing.assert_array_equal(out.data, img.data)

    def test_rot90_on_non_square_rejected(self):
        img = Tensor(np.zeros((1, 3, 4, 6), np.float32))
        with pytest.raises(ShapeError):
            apply_spatial(GeoTransform(rot90=True), img)

    def test_tflip_commutes_with_spatial(self):
        s = _generic_super_image(seed=5)
        for spatial in (GeoTransform(vflip=True), GeoTransform(hflip=True),
                        GeoTransform(rot90=True)):
            combo = GeoTransform(spatial.vflip, spatial.hflip, spatial.rot90, True)
            direct = apply(combo, s)
            via_t_first = apply(spatial, apply(GeoTransform(tflip=True), s))
            np.testing.assert_array_equal(direct.tensor.data, via_t_first.tensor.data)


class TestGroupClosure:
    def test_composition_stays_inside_the_sixteen(self):
        s = _generic_super_image(seed=6)
        all16 = enumerate_self_ensemble()
        actions = {t: apply(t, s).tensor.data.tobytes() for t in all16}
        inverse_lookup = set(actions.values())
        for t1 in all16:
            for t2 in all16:
                composed = apply(t2, apply(t1, s)).tensor.data.tobytes()
                assert composed in inverse_lookup, (t1, t2)


class TestSampling:
    def test_frequencies_near_half(self):
        rng = np.random.default_rng(7)
        counts = np.zeros(4)
        n = 10_000
        for _ in range(n):
            t = sample_train_augmentation(rng)
            counts += [t.vflip, t.hflip, t.rot90, t.tflip]
        freqs = counts / n
        assert np.all(np.abs(freqs - 0.5) <= 0.02), freqs

    def test_all_sixteen_outcomes_occur(self):
        rng = np.random.default_rng(8)
        seen = {sample_train_augmentation(rng) for _ in range(10_000)}
        assert len(seen) == 16

    def test_fixed_seed_reproducible(self):
        a = [sample_train_augmentation(np.random.default_rng(9)) for _ in range(50)]
        b = [sample_train_augmentation(np.random.default_rng(9)) for _ in range(50)]
        assert a == b


class _NearestUpsampler:
    """Exact nearest-neighbor 4x upsampler of the center frame.

    Commutes with every transform in the group: flips and rotations map
    constant 4x4 blocks to constant 4x4 blocks, and temporal reversal fixes
    the center frame.
    """

    temporal_radius = 2

    def __call__(self, s: SuperImage) -> Tensor:
        k = 3 * s.radius
        center = s.tensor.data[:, k:k + 3]
        return Tensor(np.repeat(np.repeat(center, 4, axis=2), 4, axis=3))


class TestSelfEnsemble:
    def test_equivariant_operator_matches_single_pass(self):
        model = _NearestUpsampler()
        s = _generic_super_image(radius=2, h=6, w=6, seed=10)
        single = model(s)
        ensembled = self_ensemble_infer(model, s)
        np.testing.assert_allclose(ensembled.data, single.data, atol=1e-6)

    def test_identity_only_equals_plain_inference(self):
        model = _NearestUpsampler()
        s = _generic_super_image(radius=2, seed=11)
        out = self_ensemble_infer(model, s, transforms=[GeoTransform()])
        np.testing.assert_array_equal(out.data, model(s).data)

    def test_non_square_falls_back_to_eight(self):
        model = _NearestUpsampler()
        s = _generic_super_image(radius=2, h=4, w=6, seed=12)
        out, info = self_ensemble_infer(model, s, return_info=True)
        assert info["transforms"] == 8
        assert info["rot90_dropped"] is True
        assert out.data.shape == (1, 3, 16, 24)


class TestSelfEnsembleTrainedModel:
    def test_improves_most_validation_frames(self, trained_toy_setup):
        """Self-ensembling a partially trained model helps on >= 80% of frames."""
        from vsrkit.metrics import clamp_unit, psnr
        from vsrkit.temporal import build_super_image, temporal_window
        from vsrkit.tensor import no_grad

        model, pairs = trained_toy_setup
        wins = total = 0
        for lr_seq, hr_seq in pairs["test"]:
            for t in range(len(lr_seq)):
                window = temporal_window(len(lr_seq), t, model.temporal_radius)
                s = build_super_image(lr_seq.frames, window)
                with no_grad():
                    single = clamp_unit(model(s))
                ensembled = clamp_unit(self_ensemble_infer(model, s))
                truth = hr_seq.frames[t]
                wins += psnr(ensembled, truth) >= psnr(single, truth)
                total += 1
        assert total == 20
        assert wins / total >= 0.8, f"self-ensemble helped on {wins}/{total} frames"
