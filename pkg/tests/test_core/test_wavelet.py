"""
Unit tests for the CDF 9/7 lifting transform.
"""

import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose

import sys
sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from core.approximator import make_fixture
from core.exceptions import WaveletError
from core.metrics import psnr
from core.tensor import Image3
from core.wavelet import (
    WaveletSpec, cdf97_forward, cdf97_inverse, default_levels, detail_mask, forward_planes, inverse_planes,
)


class TestCDF97(unittest.TestCase):
    """Test cases for the forward and inverse transform."""

    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_perfect_reconstruction(self):
        """Test that inverse(forward(x)) returns x for several level counts."""
        channel = self.rng.uniform(0, 255, size=(32, 64))
        for levels in (1, 3, 5):
            spec = WaveletSpec(levels)
            coeffs = cdf97_forward(channel, spec)
            self.assertEqual(coeffs.shape, channel.shape)
            assert_allclose(cdf97_inverse(coeffs, spec), channel, atol=1e-9)

    def test_constant_has_no_detail(self):
        """Test that a constant channel maps to its low band only, with gain 2 per level."""
        spec = WaveletSpec(2)
        coeffs = cdf97_forward(np.ones((16, 16)), spec)
        mask = detail_mask(coeffs.shape, spec.levels)
        assert_allclose(coeffs[mask], 0.0, atol=1e-12)
        assert_allclose(coeffs[:4, :4], 4.0, rtol=1e-10)

    def test_ramp_detail_vanishes_in_interior(self):
        """Test that a linear ramp has zero detail away from the boundary."""
        channel = np.repeat(np.arange(32, dtype=float)[:, None], 16, axis=1)
        coeffs = cdf97_forward(channel, WaveletSpec(1))
        assert_allclose(coeffs[16 + 2:16 + 13, :], 0.0, atol=1e-10)

    def test_perfect_reconstruction_random_channels(self):
        """Test 100 random 64x64 channels at the default depth against 1e-9 of their peak."""
        spec = WaveletSpec()
        for trial in range(100):
            channel = self.rng.uniform(-1000.0, 1000.0, size=(64, 64))
            error = np.abs(cdf97_inverse(cdf97_forward(channel, spec), spec) - channel).max()
            self.assertLessEqual(error, 1e-9 * np.abs(channel).max(), trial)

    def test_transform_is_linear(self):
        """Test that forward(a x + b y) equals a forward(x) + b forward(y)."""
        spec = WaveletSpec(3)
        x, y = self.rng.standard_normal((2, 32, 32))
        combined = cdf97_forward(2.5 * x - 0.75 * y, spec)
        assert_allclose(combined, 2.5 * cdf97_forward(x, spec) - 0.75 * cdf97_forward(y, spec), atol=1e-11)

    def test_natural_image_round_trip_psnr(self):
        """Test that a piecewise-smooth RGB image survives the plane-wise round trip above 180 dB."""
        img = make_fixture(seed=7, shape=(64, 64, 3))
        spec = WaveletSpec(default_levels((64, 64)))
        rebuilt = Image3(inverse_planes(forward_planes(img.planes, spec), spec))
        self.assertGreater(psnr(img, rebuilt, 255.0), 180.0)

    def test_forward_does_not_modify_input(self):
        """Test that the input channel is left untouched."""
        channel = self.rng.standard_normal((16, 16))
        before = channel.copy()
        cdf97_forward(channel, WaveletSpec(2))
        assert_allclose(channel, before)

    def test_planes_are_independent(self):
        """Test that the plane-wise transform matches transforming each plane alone."""
        planes = self.rng.standard_normal((3, 16, 16))
        spec = WaveletSpec(2)
        coeffs = forward_planes(planes, spec)
        assert_allclose(coeffs[1], cdf97_forward(planes[1], spec))
        assert_allclose(inverse_planes(coeffs, spec), planes, atol=1e-10)


class TestWaveletSpec(unittest.TestCase):
    """Test cases for level validation."""

    def test_indivisible_extent_is_rejected(self):
        """Test that extents not divisible by 2^L raise WaveletError with guidance."""
        with self.assertRaises(WaveletError) as ctx:
            cdf97_forward(np.zeros((20, 20)), WaveletSpec(3))
        self.assertIn('pad', str(ctx.exception))

    def test_invalid_spec(self):
        """Test level and boundary validation."""
        with self.assertRaises(WaveletError):
            WaveletSpec(0)
        with self.assertRaises(WaveletError):
            WaveletSpec(2, boundary='periodic')
        with self.assertRaises(WaveletError):
            cdf97_forward(np.zeros((4, 4, 4)), WaveletSpec(1))

    def test_default_levels(self):
        """Test the deepest admissible level count."""
        self.assertEqual(default_levels((64, 64)), 5)
        self.assertEqual(default_levels((24, 24)), 3)
        self.assertEqual(default_levels((8, 16)), 2)
        self.assertEqual(default_levels((6, 6)), 1)


if __name__ == '__main__':
    unittest.main()
