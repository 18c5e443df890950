"""
Tests for the command-line front end and its exit codes.
"""

import io
import json
import unittest
import tempfile
from contextlib import redirect_stdout
from pathlib import Path

import pandas as pd
import yaml

import sys
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from core.approximator import make_fixture
from core.codec import DecompositionFile, read_decomposition, write_decomposition
from core.image_io import load_image, save_image
from core.pursuit import AtomicDecomposition
from main import EXIT_IO, EXIT_OK, EXIT_QUALITY, EXIT_USAGE, main

FIXTURE_ARGS = ['approximate', '--fixture', 'rgb', '--shape', '16x16x3', '--domain', 'pd', '--threads', '1']


def run_main(argv):
    out = io.StringIO()
    with redirect_stdout(out):
        code = main(argv)
    return code, out.getvalue()


class TestMemoryCommand(unittest.TestCase):
    """Test cases for the memory subcommand."""

    def test_default_block_fits(self):
        """Test the 8^3 block with r = 5 and k = 512."""
        code, out = run_main(['memory'])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("38912 B", out)
        self.assertIn("32768 B", out)
        self.assertTrue(out.strip().endswith("PASS"))

    def test_large_block_fails_budget(self):
        """Test that a 16^3 block with k = 4096 exceeds the budget."""
        code, out = run_main(['memory', '--block', '16x16x16', '--atoms', '4096'])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("229376 B", out)
        self.assertTrue(out.strip().endswith("FAIL"))

    def test_non_cubic_block_is_usage_error(self):
        """Test that memory accounting rejects non-cubic blocks."""
        code, _ = run_main(['memory', '--block', '8x8x3'])
        self.assertEqual(code, EXIT_USAGE)


class TestUsageErrors(unittest.TestCase):
    """Test cases for argument and configuration errors."""

    def test_bad_arguments_exit_one(self):
        """Test unknown commands and conflicting targets."""
        for argv in (['compress'], ['approximate', '--psnr', '30', '--snr', '20'], ['approximate', '--engine', 'ksvd']):
            with self.assertRaises(SystemExit) as ctx:
                run_main(argv)
            self.assertEqual(ctx.exception.code, EXIT_USAGE)

    def test_missing_quality_target(self):
        """Test that approximate needs a quality target."""
        code, _ = run_main(FIXTURE_ARGS)
        self.assertEqual(code, EXIT_USAGE)


class TestPipelineCommands(unittest.TestCase):
    """Test cases for approximate, reconstruct, evaluate and bench."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = Path(tempfile.mkdtemp())
        self.out_dir = self.temp_dir / "out"

    def tearDown(self):
        """Clean up test fixtures."""
        import shutil
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def approximate(self, *extra):
        return run_main(FIXTURE_ARGS + ['--out-dir', str(self.out_dir)] + list(extra))

    def test_approximate_writes_outputs(self):
        """Test the decomposition, reconstruction, report and k_q map files."""
        code, _ = self.approximate('--psnr', '30', '--formats', 'json', 'csv', '--kq-png')
        self.assertEqual(code, EXIT_OK)
        for name in ('fixture-rgb-0.spmp3d', 'fixture-rgb-0_approx.ppm', 'fixture-rgb-0_report.json',
                     'fixture-rgb-0_report.csv', 'fixture-rgb-0_kq.csv', 'fixture-rgb-0_kq.png'):
            self.assertTrue((self.out_dir / name).exists(), name)

        report = json.loads((self.out_dir / 'fixture-rgb-0_report.json').read_text())['summary']
        self.assertEqual(report['engine'], 'spmp3d')
        self.assertGreaterEqual(report['psnr'], 30.0)
        kq = pd.read_csv(self.out_dir / 'fixture-rgb-0_kq.csv', header=None).to_numpy()
        self.assertEqual(kq.shape, (2, 2))
        self.assertEqual(kq.sum(), report['total_atoms'])

    def test_approximate_calibrate(self):
        """Test that --calibrate records the rho scale it settled on."""
        code, _ = self.approximate('--psnr', '30', '--calibrate', '--calibration-tolerance', '2')
        self.assertEqual(code, EXIT_OK)
        report = json.loads((self.out_dir / 'fixture-rgb-0_report.json').read_text())['summary']
        self.assertGreaterEqual(report['psnr'], 30.0)
        self.assertGreaterEqual(report['extra']['rho_scale'], 1.0)
        self.assertIn('calibration_rounds', report['extra'])

        code, _ = self.approximate('--rho', '5', '--calibrate')
        self.assertEqual(code, EXIT_USAGE)

    def test_reconstruct_matches_approximation(self):
        """Test that the decomposition file rebuilds the written approximation."""
        self.assertEqual(self.approximate('--psnr', '30')[0], EXIT_OK)
        rebuilt_path = self.temp_dir / "rebuilt.ppm"
        code, _ = run_main(['reconstruct', str(self.out_dir / 'fixture-rgb-0.spmp3d'), '--out', str(rebuilt_path)])
        self.assertEqual(code, EXIT_OK)

        self.assertEqual(rebuilt_path.read_bytes(), (self.out_dir / 'fixture-rgb-0_approx.ppm').read_bytes())

    def test_reconstruct_rejects_out_of_range_indices(self):
        """Test that atom indices outside 1..M exit 2 even when the checksum is valid."""
        self.assertEqual(self.approximate('--psnr', '30')[0], EXIT_OK)
        df = read_decomposition(self.out_dir / 'fixture-rgb-0.spmp3d')
        block = next(dc for dc in df.decompositions if dc.k)
        out = str(self.temp_dir / "r.ppm")
        mx = 40  # thin3d on an 8-point axis
        for bad in ((0, 1, 1), (mx + 1, 1, 1)):
            crafted = AtomicDecomposition(block.extents, block.origin, [1.0], [bad])
            blocks = [crafted if dc is block else dc for dc in df.decompositions]
            path = self.temp_dir / f"crafted-{bad[0]}.spmp3d"
            write_decomposition(path, DecompositionFile(df.metadata, blocks))
            self.assertEqual(run_main(['reconstruct', str(path), '--out', out])[0], EXIT_IO, bad)

    def test_reconstruct_errors_exit_two(self):
        """Test a missing file and a dictionary that does not match the stored hash."""
        self.assertEqual(self.approximate('--psnr', '30')[0], EXIT_OK)
        decomposition = str(self.out_dir / 'fixture-rgb-0.spmp3d')
        out = str(self.temp_dir / "r.ppm")

        self.assertEqual(run_main(['reconstruct', str(self.temp_dir / 'none.spmp3d'), '--out', out])[0], EXIT_IO)
        self.assertEqual(run_main(['reconstruct', decomposition, '--out', out, '--dict', 'dirac'])[0], EXIT_IO)

        corrupt = self.temp_dir / "corrupt.spmp3d"
        corrupt.write_bytes(b"not a decomposition")
        self.assertEqual(run_main(['reconstruct', str(corrupt), '--out', out])[0], EXIT_IO)

    def test_strict_unreached_target_exits_three(self):
        """Test strict mode when the atom cap prevents reaching rho."""
        code, _ = self.approximate('--rho', '0', '--max-atoms', '1', '--strict')
        self.assertEqual(code, EXIT_QUALITY)
        # Without --strict the same run only warns.
        code, _ = self.approximate('--rho', '0', '--max-atoms', '1')
        self.assertEqual(code, EXIT_OK)

    def test_evaluate_prints_metrics(self):
        """Test the JSON metrics with and without a decomposition."""
        self.assertEqual(self.approximate('--psnr', '30')[0], EXIT_OK)
        reference = self.temp_dir / "reference.ppm"
        save_image(make_fixture(seed=0, shape=(16, 16, 3), kind='rgb'), reference)
        approximation = str(self.out_dir / 'fixture-rgb-0_approx.ppm')

        code, out = run_main(['evaluate', str(reference), approximation])
        self.assertEqual(code, EXIT_OK)
        metrics = json.loads(out)
        self.assertEqual(metrics['imax'], 255.0)
        self.assertGreater(metrics['psnr'], 25.0)
        self.assertGreater(metrics['snr'], 0.0)

        code, out = run_main(['evaluate', str(reference), approximation,
                              '--decomposition', str(self.out_dir / 'fixture-rgb-0.spmp3d'),
                              '--kq-out', str(self.temp_dir / 'map.csv')])
        metrics = json.loads(out)
        self.assertEqual(metrics['total_points'], 768)
        self.assertEqual(metrics['kq_grid_shape'], [2, 2])
        self.assertAlmostEqual(metrics['sr'], 768 / metrics['total_atoms'])
        self.assertTrue((self.temp_dir / 'map.csv').exists())

        code, out = run_main(['evaluate', str(reference), approximation, '--imax', '1023'])
        self.assertEqual(json.loads(out)['imax'], 1023.0)

    def test_evaluate_identical_images(self):
        """Test that identical images report an infinite PSNR."""
        reference = self.temp_dir / "reference.ppm"
        save_image(make_fixture(seed=0, shape=(16, 16, 3), kind='rgb'), reference)
        code, out = run_main(['evaluate', str(reference), str(reference)])
        self.assertEqual(code, EXIT_OK)
        metrics = json.loads(out)
        self.assertEqual(metrics['psnr'], 'inf')
        self.assertEqual(metrics['mse'], 0.0)

    def test_bench_with_only_missing_images(self):
        """Test that a suite with nothing to run writes a header-only CSV."""
        suite = self.temp_dir / "suite.yaml"
        suite.write_text(yaml.safe_dump({'images': ['absent.ppm']}))
        code, _ = run_main(['bench', str(suite), '--out-dir', str(self.out_dir)])
        self.assertEqual(code, EXIT_OK)
        header = (self.out_dir / 'bench.csv').read_text().strip()
        self.assertEqual(header.split(','), ['image', 'engine', 'domain', 'block', 'target_kind', 'target_value',
                                             'total_points', 'total_atoms', 'sr', 'psnr', 'snr',
                                             'elapsed_seconds', 'blocks_unreached', 'rho_scale'])
        summary = json.loads((self.out_dir / 'bench.json').read_text())['summary']
        self.assertEqual(summary['runs'], 0)
        self.assertEqual(len(summary['missing']), 1)

    def test_bench_fixture_sweep(self):
        """Test a small fixture sweep with the 2D baseline."""
        suite = self.temp_dir / "suite.yaml"
        suite.write_text(yaml.safe_dump({
            'fixtures': [{'kind': 'rgb', 'seed': 1, 'shape': [16, 16, 3]}],
            'engines': ['spmp3d', 'omp2d'],
            'domains': ['pd'],
            'targets': [{'psnr': 30}],
        }))
        code, _ = run_main(['bench', str(suite), '--out-dir', str(self.out_dir), '--threads', '1'])
        self.assertEqual(code, EXIT_OK)
        rows = pd.read_csv(self.out_dir / 'bench.csv')
        self.assertEqual(rows['engine'].tolist(), ['spmp3d', 'omp2d'])
        self.assertEqual(rows['block'].tolist(), ['8x8x3', '8x8x1'])
        summary = json.loads((self.out_dir / 'bench.json').read_text())['summary']
        self.assertEqual(len(summary['aggregate']), 2)
        self.assertEqual(len(summary['direction_checks']), 1)

    def test_bench_threshold_and_calibration(self):
        """Test the thresholding row and calibrated runs landing in the accepted PSNR band."""
        suite = self.temp_dir / "suite.yaml"
        suite.write_text(yaml.safe_dump({
            'fixtures': [{'kind': 'rgb', 'seed': 1, 'shape': [16, 16, 3]}],
            'engines': ['spmp3d', 'omp2d', 'threshold'],
            'domains': ['wd'],
            'targets': [{'psnr': 35}],
            'calibrate': True,
            'calibration_tolerance': 1.0,
        }))
        code, _ = run_main(['bench', str(suite), '--out-dir', str(self.out_dir), '--threads', '1'])
        self.assertEqual(code, EXIT_OK)
        rows = pd.read_csv(self.out_dir / 'bench.csv')
        self.assertEqual(rows['engine'].tolist(), ['threshold', 'spmp3d', 'omp2d'])
        self.assertEqual(rows['block'].tolist(), ['whole', '8x8x3', '8x8x1'])
        self.assertTrue((rows['psnr'] >= 35.0).all())
        self.assertTrue((rows['total_atoms'] > 0).all())
        summary = json.loads((self.out_dir / 'bench.json').read_text())['summary']
        self.assertEqual(len(summary['aggregate']), 3)


if __name__ == '__main__':
    unittest.main()
