import numpy as np
import pytest

from darkfuse.errors import InputDomainError
from darkfuse.sensor import (
    RawFrame,
    RawNoiseParams,
    clean_raw,
    gaussian_blur_illumination,
    synthesize_raw,
)


class TestCleanRaw:
    def test_constant_field(self):
        frame = clean_raw(np.full((8, 8), 100.0), gain=2.0)
        np.testing.assert_array_equal(frame.values, np.full((8, 8), 200.0))

    def test_zero_field(self):
        frame = clean_raw(np.zeros((4, 4)), gain=3.5)
        np.testing.assert_array_equal(frame.values, np.zeros((4, 4)))

    def test_ramp_matches_pointwise_oracle(self):
        ramp = np.linspace(0.0, 1000.0, 64 * 64).reshape(64, 64)
        frame = clean_raw(ramp, gain=0.5)
        oracle = np.array([[0.5 * v for v in row] for row in ramp])
        assert np.max(np.abs(frame.values - oracle)) == 0.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(InputDomainError):
            clean_raw(np.full((3, 3), -1.0), gain=1.0)
        with pytest.raises(InputDomainError):
            clean_raw(np.full((3, 3), np.nan), gain=1.0)
        with pytest.raises(InputDomainError):
            clean_raw(np.ones((3, 3)), gain=0.0)


class TestSynthesizeRaw:
    def test_all_noise_disabled_reduces_to_clean(self):
        params = RawNoiseParams(gain=2.0, enable_shot=False, enable_read=False, enable_quant=False)
        frame = synthesize_raw(np.full((16, 16), 100.0), params, seed=7)
        np.testing.assert_array_equal(frame.values, np.full((16, 16), 200.0))

    def test_shot_noise_statistics(self):
        # Poisson(100): mean = var = 100 over 10^6 pixels.
        params = RawNoiseParams(gain=1.0, enable_read=False, enable_quant=False)
        frame = synthesize_raw(np.full((1000, 1000), 100.0), params, seed=42)
        mean = frame.values.mean()
        var = frame.values.var()
        assert 99.7 <= mean <= 100.3
        assert 97.0 <= var <= 103.0

    def test_read_noise_statistics(self):
        # Pedestal keeps the Gaussian symmetric through the ADC clamp.
        params = RawNoiseParams(
            gain=1.0, read_sigma=5.0, black_level=64.0,
            enable_shot=False, enable_quant=False,
        )
        frame = synthesize_raw(np.zeros((1000, 1000)), params, seed=3)
        std = frame.values.std()
        assert 4.95 <= std <= 5.05

    def test_determinism(self):
        params = RawNoiseParams(gain=1.3, read_sigma=2.0, quant_step=0.5, black_level=16.0)
        a = synthesize_raw(np.full((32, 32), 50.0), params, seed=99)
        b = synthesize_raw(np.full((32, 32), 50.0), params, seed=99)
        np.testing.assert_array_equal(a.values, b.values)
        c = synthesize_raw(np.full((32, 32), 50.0), params, seed=100)
        assert not np.array_equal(a.values, c.values)

    def test_quantization_grid(self):
        params = RawNoiseParams(gain=1.0, quant_step=2.0, enable_shot=False, enable_read=False)
        frame = synthesize_raw(np.full((8, 8), 101.2), params, seed=0)
        np.testing.assert_array_equal(frame.values, np.full((8, 8), 102.0))

    def test_shot_variance_mean_ratio_property(self):
        # Poisson property: var/mean in [0.95, 1.05] for I >= 50.
        rng = np.random.default_rng(5)
        for level in rng.uniform(50.0, 500.0, size=5):
            params = RawNoiseParams(gain=1.0, enable_read=False, enable_quant=False)
            frame = synthesize_raw(np.full((500, 500), level), params, seed=int(level * 10))
            ratio = frame.values.var() / frame.values.mean()
            assert 0.95 <= ratio <= 1.05


class TestGaussianBlur:
    def test_sigma_zero_identity(self, rng):
        img = rng.normal(size=(16, 16))
        out = gaussian_blur_illumination(img, 0.0)
        np.testing.assert_array_equal(out, img)

    def test_constant_preserved(self):
        img = np.full((20, 20), 7.5)
        out = gaussian_blur_illumination(img, 2.0)
        np.testing.assert_allclose(out, img, atol=1e-12)

    def test_impulse_matches_sampled_kernel(self):
        sigma = 1.5
        radius = int(3.0 * sigma + 0.5)
        xs = np.arange(-radius, radius + 1, dtype=np.float64)
        k1d = np.exp(-0.5 * (xs / sigma) ** 2)
        k1d /= k1d.sum()

        img = np.zeros((33, 33))
        img[16, 16] = 1.0
        out = gaussian_blur_illumination(img, sigma)
        assert abs(out[16, 16] - k1d[radius] ** 2) < 1e-9
        # Off-center sample too.
        assert abs(out[16, 18] - k1d[radius] * k1d[radius + 2]) < 1e-9

    def test_accepts_raw_frame(self):
        frame = RawFrame(values=np.full((10, 10), 3.0), gain=1.0)
        out = gaussian_blur_illumination(frame, 1.0)
        np.testing.assert_allclose(out, 3.0, atol=1e-12)
