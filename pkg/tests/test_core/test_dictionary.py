"""
Unit tests for 1D dictionaries and their separable assembly.
"""

import unittest
import tempfile
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose

import sys
sys.path.insert(0, str(Path(__file__).parent.parent.parent / "src"))

from core.dictionary import (
    DICTIONARY_NAMES, Dictionary1D, build_cosine, build_dirac, build_mixed_1d, build_named,
    build_separable, build_sine, build_spline_prototypes, build_thin_3d, build_wavelet_prototypes,
    load_dictionary, save_dictionary, translate_prototype, union,
)
from core.exceptions import DictionaryError, FormatError


class TestDictionaryConstruction(unittest.TestCase):
    """Test cases for the 1D dictionary builders."""

    def assertUnitNorm(self, d: Dictionary1D):
        assert_allclose(np.linalg.norm(d.atoms, axis=0), 1.0, atol=1e-12)

    def test_cosine_first_atom_is_constant(self):
        """Test that the cosine dictionary starts with the normalized constant vector."""
        d = build_cosine(8)
        self.assertEqual((d.n, d.m), (8, 16))
        assert_allclose(d.atoms[:, 0], np.full(8, 1 / np.sqrt(8)))
        self.assertUnitNorm(d)

    def test_sine_atoms(self):
        """Test sine atoms against the closed form."""
        d = build_sine(4, 8)
        i = np.arange(1, 5)
        expected = np.sin(np.pi * (2 * i - 1) * 3 / 16)
        assert_allclose(d.atoms[:, 2], expected / np.linalg.norm(expected))
        self.assertUnitNorm(d)

    def test_spline_prototypes(self):
        """Test hat samples and the backward-difference derivative prototypes."""
        h = build_spline_prototypes(8)
        self.assertEqual(len(h), 7)
        assert_allclose(h[0][:2], [1.0, 0.0])
        assert_allclose(h[1][:3], [0.5, 1.0, 0.5])
        assert_allclose(h[4][:3], [0.5, 0.5, -0.5])
        assert_allclose(h[6][:7], [0.25, 0.25, 0.25, 0.25, -0.25, -0.25, -0.25])
        with self.assertRaises(DictionaryError):
            build_spline_prototypes(7)

    def test_wavelet_prototypes(self):
        """Test the seven wavelet-domain prototypes."""
        p = build_wavelet_prototypes(4)
        assert_allclose(p[1][:2], [1.0, 1.0])
        assert_allclose(p[2][:3], [0.5, 0.5, -0.5])
        assert_allclose(p[6][:3], [-1.0, -1.0, 1.0])
        with self.assertRaises(DictionaryError):
            build_wavelet_prototypes(2)

    def test_translates_are_truncated(self):
        """Test that translates keep n atoms and lose their tail at the boundary."""
        d = translate_prototype([1.0, 1.0, 1.0], 5, name='box')
        self.assertEqual(d.m, 5)
        assert_allclose(d.atoms[:, 0], np.array([1, 1, 1, 0, 0]) / np.sqrt(3))
        assert_allclose(d.atoms[:, 4], [0, 0, 0, 0, 1])
        self.assertEqual(d.labels[1], ('box', 2))

    def test_dirac_is_identity(self):
        """Test that the Dirac dictionary is the standard basis."""
        assert_allclose(build_dirac(6).atoms, np.eye(6))

    def test_mixed_and_thin_counts(self):
        """Test atom counts of the mixed (11n) and thin (5n) dictionaries."""
        self.assertEqual(build_mixed_1d(8, 'pd').m, 88)
        self.assertEqual(build_mixed_1d(8, 'wd').m, 88)
        self.assertEqual(build_thin_3d(3).m, 15)
        self.assertUnitNorm(build_mixed_1d(8, 'pd'))
        with self.assertRaises(DictionaryError):
            build_mixed_1d(8, 'xd')

    def test_union_keeps_duplicates(self):
        """Test that union concatenates columns in order."""
        d = union(build_dirac(4), build_dirac(4))
        self.assertEqual(d.m, 8)
        assert_allclose(d.atoms[:, 4:], np.eye(4))
        with self.assertRaises(DictionaryError):
            union(build_dirac(4), build_dirac(5))

    def test_atoms_are_read_only(self):
        """Test that built dictionaries cannot be modified."""
        d = build_cosine(4)
        with self.assertRaises(ValueError):
            d.atoms[0, 0] = 2.0

    def test_rejects_non_unit_atoms(self):
        """Test invariant checks of Dictionary1D."""
        with self.assertRaises(DictionaryError):
            Dictionary1D(np.ones((3, 2)), (('a', 1), ('a', 2)))
        with self.assertRaises(DictionaryError):
            Dictionary1D(np.eye(3), (('a', 1),))

    def test_build_named(self):
        """Test every registered name builds for a typical block side."""
        for name in DICTIONARY_NAMES:
            self.assertEqual(build_named(name, 8).n, 8)
        with self.assertRaises(DictionaryError):
            build_named('haar', 8)


class TestSeparableDictionary(unittest.TestCase):
    """Test cases for the separable 3D dictionary."""

    def test_counts_and_redundancy(self):
        """Test implied size and redundancy of Dx ⊗ Dy ⊗ Dz."""
        d = build_separable(('thin3d', 'thin3d', 'thin3d'), (8, 8, 3))
        self.assertEqual(d.extents, (8, 8, 3))
        self.assertEqual(d.counts, (40, 40, 15))
        self.assertEqual(d.size, 40 * 40 * 15)
        self.assertAlmostEqual(d.redundancy, 125.0)
        self.assertEqual(d.redundancies, (5.0, 5.0, 5.0))

    def test_fingerprint_identifies_dictionary(self):
        """Test that the fingerprint is stable and sensitive to the factors."""
        a = build_separable(('thin3d',) * 3, (8, 8, 3))
        b = build_separable(('thin3d',) * 3, (8, 8, 3))
        c = build_separable(('mixed-pd', 'mixed-pd', 'dirac'), (8, 8, 1))
        self.assertEqual(a.fingerprint(), b.fingerprint())
        self.assertNotEqual(a.fingerprint(), c.fingerprint())
        self.assertEqual(len(a.fingerprint()), 64)


class TestDictionaryFiles(unittest.TestCase):
    """Test cases for dictionary text files."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        """Clean up test fixtures."""
        import shutil
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_save_and_load(self):
        """Test that a saved dictionary loads with identical atoms."""
        path = self.temp_dir / "mixed.txt"
        d = build_mixed_1d(8, 'wd')
        save_dictionary(d, path)
        loaded = load_dictionary(path)
        assert_allclose(loaded.atoms, d.atoms, atol=1e-15)

    def test_load_rejects_bad_shape(self):
        """Test that a header that disagrees with the body raises FormatError."""
        path = self.temp_dir / "bad.txt"
        path.write_text("3 2\n1 0 0\n")
        with self.assertRaises(FormatError):
            load_dictionary(path)


if __name__ == '__main__':
    unittest.main()
