import numpy as np
import pytest

from darkfuse.errors import InputDomainError
from darkfuse.fusion import (
    FusionConfig,
    apply_weights,
    direct_weights,
    encode_features,
    fusion_weights,
    image_snr_weights,
    snr_map,
    voxel_magnitude,
)


class TestSnrMap:
    def test_guard_case_80_db(self):
        m = np.ones((8, 8))
        out = snr_map(m, m, eps=1e-8)
        np.testing.assert_allclose(out, 80.0, atol=1e-6)

    def test_direct_evaluation(self):
        out = snr_map(np.full((4, 4), 2.0), np.full((4, 4), 1.0), eps=1e-8)
        expected = 10 * np.log10(4.0 / (1.0 + 1e-8))
        np.testing.assert_allclose(out, expected, atol=1e-9)
        assert abs(expected - 6.0206) < 1e-3

    def test_residual_doubling_drops_six_db(self, rng):
        m_in = rng.uniform(1.0, 5.0, (16, 16))
        resid = rng.uniform(0.1, 0.5, (16, 16))
        a = snr_map(m_in, m_in - resid, eps=1e-12)
        b = snr_map(m_in, m_in - 2 * resid, eps=1e-12)
        np.testing.assert_allclose(a - b, 20 * np.log10(2.0), atol=1e-6)

    def test_zero_signal_is_finite_and_very_negative(self):
        out = snr_map(np.zeros((4, 4)), np.zeros((4, 4)), eps=1e-8)
        assert np.all(np.isfinite(out))
        assert np.all(out < -200.0)

    def test_shape_mismatch(self):
        with pytest.raises(InputDomainError):
            snr_map(np.zeros((4, 4)), np.zeros((5, 4)))


class TestFusionWeights:
    def test_identical_maps_give_half(self, rng):
        s = rng.uniform(-40, 40, (16, 16))
        w = fusion_weights(s, s.copy(), FusionConfig())
        np.testing.assert_allclose(w.w_img, 0.5)
        np.testing.assert_allclose(w.w_evt, 0.5)

    def test_ln9_difference_gives_090(self):
        cfg = FusionConfig(smoothing_size=1, temperature=1.0)
        diff = np.log(9.0)
        w = fusion_weights(np.full((4, 4), diff), np.zeros((4, 4)), cfg)
        np.testing.assert_allclose(w.w_img, 0.9, atol=1e-12)

    def test_large_temperature_flattens(self, rng):
        s_img = rng.uniform(-40, 40, (8, 8))
        s_evt = rng.uniform(-40, 40, (8, 8))
        cfg = FusionConfig(smoothing_size=1, temperature=1e3 * 80.0)
        w = fusion_weights(s_img, s_evt, cfg)
        assert np.max(np.abs(w.w_img - 0.5)) <= 0.01

    def test_sum_to_one_and_open_interval(self, rng):
        s_img = rng.uniform(-200, 200, (32, 32))
        s_evt = rng.uniform(-200, 200, (32, 32))
        w = fusion_weights(s_img, s_evt, FusionConfig())
        np.testing.assert_allclose(w.w_img + w.w_evt, 1.0, atol=1e-12)
        assert np.all(w.w_img > 0) and np.all(w.w_img < 1)
        assert np.all(w.w_evt > 0) and np.all(w.w_evt < 1)

    def test_shift_invariance_and_argmax(self, rng):
        cfg = FusionConfig(smoothing_size=3)
        for _ in range(50):
            s_img = rng.uniform(-30, 30, (12, 12))
            s_evt = rng.uniform(-30, 30, (12, 12))
            c = rng.uniform(-20, 20)
            w0 = fusion_weights(s_img, s_evt, cfg)
            w1 = fusion_weights(s_img + c, s_evt + c, cfg)
            np.testing.assert_allclose(w0.w_img, w1.w_img, atol=1e-12)
            from darkfuse.fusion import _smooth
            sm_i = _smooth(s_img, 3)
            sm_e = _smooth(s_evt, 3)
            np.testing.assert_array_equal(w0.w_img > 0.5, sm_i > sm_e)

    def test_monotonicity_in_image_snr(self):
        cfg = FusionConfig(smoothing_size=1)
        s_evt = np.zeros((4, 4))
        s1 = np.zeros((4, 4))
        s2 = s1.copy()
        s2[2, 2] = 5.0
        w1 = fusion_weights(s1, s_evt, cfg)
        w2 = fusion_weights(s2, s_evt, cfg)
        assert w2.w_img[2, 2] > w1.w_img[2, 2]

    def test_image_only_mode_uses_own_reference(self):
        cfg = FusionConfig(smoothing_size=1)
        s_img = np.zeros((4, 8))
        s_img[:, 4:] = 20.0
        w = image_snr_weights(s_img, cfg)
        assert np.all(w.w_img[:, 4:] > 0.5)
        assert np.all(w.w_img[:, :4] < 0.5)
        np.testing.assert_allclose(w.w_img + w.w_evt, 1.0, atol=1e-12)

    def test_direct_mode(self):
        w = direct_weights((6, 6))
        np.testing.assert_array_equal(w.w_img, 0.5)
        np.testing.assert_array_equal(w.w_evt, 0.5)


class TestEncodeFeatures:
    def test_constant_image_kills_derivatives(self):
        f = encode_features(np.full((16, 16), 9.0))
        assert f.shape == (8, 16, 16)
        np.testing.assert_allclose(f[1:4], 0.0, atol=1e-12)

    def test_horizontal_ramp(self):
        img = np.tile(np.arange(16.0), (16, 1))
        f = encode_features(img)
        interior = (slice(1, -1), slice(1, -1))
        np.testing.assert_allclose(f[1][interior], 1.0, atol=1e-12)
        np.testing.assert_allclose(f[2][interior], 0.0, atol=1e-12)

    def test_matches_direct_convolution_oracle(self, rng):
        img = rng.normal(size=(16, 16))
        f = encode_features(img)

        def conv2(image, kernel):
            kh, kw = kernel.shape
            ph, pw = kh // 2, kw // 2
            padded = np.pad(image, ((ph, ph), (pw, pw)), mode="reflect")
            out = np.zeros_like(image)
            for i in range(image.shape[0]):
                for j in range(image.shape[1]):
                    out[i, j] = np.sum(padded[i : i + kh, j : j + kw] * kernel[::-1, ::-1])
            return out

        def gauss_kernel(sigma):
            radius = int(3.0 * sigma + 0.5)
            xs = np.arange(-radius, radius + 1, dtype=np.float64)
            k = np.exp(-0.5 * (xs / sigma) ** 2)
            k /= k.sum()
            return np.outer(k, k)

        kx = np.array([[-0.5, 0.0, 0.5]])
        ky = kx.T
        klap = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
        np.testing.assert_allclose(f[1], conv2(img, kx[::-1, ::-1]), atol=1e-9)
        np.testing.assert_allclose(f[2], conv2(img, ky[::-1, ::-1]), atol=1e-9)
        np.testing.assert_allclose(f[3], conv2(img, klap), atol=1e-9)
        g1 = conv2(img, gauss_kernel(1.0))
        g2 = conv2(img, gauss_kernel(2.0))
        np.testing.assert_allclose(f[4], img - g1, atol=1e-9)
        np.testing.assert_allclose(f[5], g1 - g2, atol=1e-9)

    def test_voxel_collapse(self, rng):
        voxel = rng.normal(size=(5, 8, 8))
        f = encode_features(voxel)
        np.testing.assert_allclose(f[0], voxel.sum(axis=0), atol=1e-12)

    def test_voxel_magnitude(self, rng):
        voxel = rng.normal(size=(4, 6, 6))
        np.testing.assert_allclose(voxel_magnitude(voxel), np.abs(voxel).sum(axis=0))


class TestApplyWeights:
    def test_identity_and_zero(self, rng):
        f = rng.normal(size=(8, 10, 10))
        np.testing.assert_array_equal(apply_weights(f, np.ones((10, 10))), f)
        np.testing.assert_array_equal(apply_weights(f, np.zeros((10, 10))), np.zeros_like(f))

    def test_pointwise_product_oracle(self, rng):
        f = rng.normal(size=(3, 5, 7))
        w = rng.uniform(size=(5, 7))
        out = apply_weights(f, w)
        for c in range(3):
            for i in range(5):
                for j in range(7):
                    assert abs(out[c, i, j] - f[c, i, j] * w[i, j]) <= 1e-12

    def test_linear_in_features(self, rng):
        f1 = rng.normal(size=(2, 4, 4))
        f2 = rng.normal(size=(2, 4, 4))
        w = rng.uniform(size=(4, 4))
        np.testing.assert_allclose(
            apply_weights(2.0 * f1 + f2, w),
            2.0 * apply_weights(f1, w) + apply_weights(f2, w),
            atol=1e-12,
        )

    def test_dimension_mismatch(self):
        with pytest.raises(InputDomainError):
            apply_weights(np.zeros((2, 4, 4)), np.zeros((3, 4)))
