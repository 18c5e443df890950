"""
Unit tests for image file formats.
"""

import json
import unittest
import tempfile
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

import sys
sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from core.exceptions import FormatError
from core.image_io import detect_format, load_image, quantize, save_image, sidecar_path
from core.tensor import Image3


class TestImageIO(unittest.TestCase):
    """Test cases for Netpbm, cube and PNG files."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = Path(tempfile.mkdtemp())
        self.rng = np.random.default_rng(4)

    def tearDown(self):
        """Clean up test fixtures."""
        import shutil
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_ppm_layout(self):
        """Test that Netpbm rows map to x, columns to y and channels to z."""
        path = self.temp_dir / "tiny.ppm"
        raster = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
        path.write_bytes(b"P6\n# comment\n3 2\n255\n" + raster.tobytes())

        img = load_image(path)
        self.assertEqual(img.extents, (2, 3, 3))
        self.assertEqual((img.imax, img.dtype), (255.0, 'u8'))
        self.assertEqual(img.planes[1, 0, 2], raster[0, 2, 1])

    def test_ppm_save_and_load(self):
        """Test writing and reading back an 8-bit colour image."""
        data = self.rng.integers(0, 256, size=(5, 7, 3))
        path = self.temp_dir / "out.ppm"
        save_image(Image3.from_xyz(data, imax=255.0, dtype='u8'), path)
        assert_array_equal(load_image(path).to_xyz(), data)

    def test_pgm_16bit_is_big_endian(self):
        """Test that 16-bit samples are stored most significant byte first."""
        path = self.temp_dir / "deep.pgm"
        save_image(Image3.from_xyz(np.array([[258.0, 1.0]]), dtype='u16'), path, dtype='u16')
        data = path.read_bytes()
        self.assertTrue(data.startswith(b"P5\n2 1\n65535\n"))
        self.assertEqual(data[-4:], b"\x01\x02\x00\x01")

        img = load_image(path)
        self.assertEqual((img.imax, img.dtype), (65535.0, 'u16'))
        assert_array_equal(img.to_xyz()[:, :, 0], [[258, 1]])

    def test_netpbm_errors(self):
        """Test truncated data and unsupported magic."""
        path = self.temp_dir / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(10))
        with self.assertRaises(FormatError):
            load_image(path)

        path.write_bytes(b"P2\n1 1\n255\n7\n")
        with self.assertRaises(FormatError):
            load_image(path)

    def test_cube_with_sidecar(self):
        """Test a u16 cube round trip and its JSON sidecar."""
        data = self.rng.integers(0, 4000, size=(6, 5, 4))
        path = self.temp_dir / "scene.cube"
        save_image(Image3.from_xyz(data, dtype='u16'), path, dtype='u16')

        meta = json.loads(sidecar_path(path).read_text())
        self.assertEqual(meta, {'nx': 6, 'ny': 5, 'nz': 4, 'dtype': 'u16'})
        img = load_image(path)
        self.assertEqual(img.imax, 65535.0)
        assert_array_equal(img.to_xyz(), data)

    def test_cube_size_mismatch(self):
        """Test that a payload disagreeing with the sidecar raises FormatError."""
        path = self.temp_dir / "broken.cube"
        path.write_bytes(bytes(10))
        sidecar_path(path).write_text(json.dumps({'nx': 2, 'ny': 2, 'nz': 2, 'dtype': 'u8'}))
        with self.assertRaises(FormatError):
            load_image(path)

        path.unlink()
        path.write_bytes(bytes(8))
        sidecar_path(path).unlink()
        with self.assertRaises(FormatError):
            load_image(path)

    def test_png_round_trip(self):
        """Test an RGB PNG round trip through Pillow."""
        data = self.rng.integers(0, 256, size=(4, 6, 3))
        path = self.temp_dir / "rgb.png"
        save_image(Image3.from_xyz(data, dtype='u8'), path)
        img = load_image(path)
        self.assertEqual(img.extents, (4, 6, 3))
        assert_array_equal(img.to_xyz(), data)

    def test_missing_file_and_unknown_suffix(self):
        """Test the errors for missing files and unknown extensions."""
        with self.assertRaises(FileNotFoundError):
            load_image(self.temp_dir / "nope.ppm")
        with self.assertRaises(FormatError):
            detect_format(Path("image.tiff"))

    def test_imax_override(self):
        """Test that an explicit imax replaces the dtype range."""
        path = self.temp_dir / "gray.pgm"
        save_image(Image3.from_xyz(np.ones((2, 2))), path, dtype='u8')
        self.assertEqual(load_image(path, imax=100.0).imax, 100.0)

    def test_quantize_rounds_and_clips(self):
        """Test integer quantization of reconstructed samples."""
        assert_array_equal(quantize(np.array([-3.2, 0.4, 0.6, 254.5, 300.0]), 'u8'), [0, 0, 1, 254, 255])
        with self.assertRaises(FormatError):
            quantize(np.zeros(2), 'u32')


if __name__ == '__main__':
    unittest.main()
