#!/usr/bin/env python3
"""
SPMP3D - Sparse approximation of 3D images

Command-line front end: approximate, reconstruct, evaluate, bench and memory
subcommands over separable-dictionary greedy pursuit.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add src directory to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from core.approximator import (
    DOMAINS, ENGINE_NAMES, approximate_image, calibrate_target, make_fixture, reconstruct_image,
    run_dictionary, threshold_wavelet,
)
from core.bench import (
    BENCH_COLUMNS, THRESHOLD_ENGINE, BenchRun, BenchSuite, aggregate, direction_checks, expand_runs,
    load_fixture, report_row, threshold_row,
)
from core.codec import DecompositionFile, read_decomposition, write_decomposition
from core.dictionary import DICTIONARY_NAMES, build_separable
from core.exceptions import (
    ConfigError, DictionaryMismatchError, FormatError, SparseApproxError, WaveletError,
)
from core.exporter import EXPORT_FORMATS, ResultExporter
from core.image_io import load_image, save_image
from core.metrics import format_db, kq_grid, mse, psnr, snr, sparsity_ratio
from core.partition import PartitionSpec, block_grid
from core.pursuit import PursuitConfig, memory_footprint
from core.tensor import Image3
from utils import ConfigManager, ProgressLogger, RunConfig, setup_logger
from utils.logger import get_logger

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_QUALITY = 3

DECOMPOSITION_SUFFIX = '.spmp3d'
REQUIRED_METADATA = ('extents', 'padded_extents', 'partition', 'domain', 'dictionaries')


class SparseApproxApp:
    """Main application class: one method per subcommand, each returning an exit code."""

    def __init__(self, config_path: str = None, overrides: Dict[str, Any] = None):
        """Initialize the application.

        Args:
            config_path: Path to configuration file
            overrides: Values from the command line (None entries are ignored)
        """
        self.config_manager = ConfigManager(config_path)
        self.config_manager.update(overrides or {})

        # Core modules log under their own names, so handlers go on the root logger.
        setup_logger(
            None,
            log_dir=self.config_manager.get('log_dir'),
            log_level=self.config_manager.get('log_level', 'INFO'),
        )
        self.logger = get_logger("spmp3d")
        self.exporter = ResultExporter()
        self.logger.debug(f"Working directory: {os.getcwd()}")
        self.logger.debug(f"Command line args: {sys.argv}")

    def _run_config(self) -> RunConfig:
        return self.config_manager.to_run_config()

    def _load_input(self, run: RunConfig, fixture: Optional[str] = None,
                    shape: Optional[str] = None) -> Image3:
        if fixture:
            dims = tuple(int(v) for v in (shape or '64x64x3').lower().split('x'))
            if len(dims) != 3:
                raise ConfigError(f"Fixture shape must be NXxNYxNZ, got '{shape}'")
            img = make_fixture(seed=run.seed, shape=dims, kind=fixture)
        else:
            if not run.input:
                raise ConfigError("No input image given (use --in or --fixture)")
            img = load_image(Path(run.input))
        if run.imax is not None:
            img.imax = run.imax
        return img

    def cmd_approximate(self, fixture: Optional[str] = None, shape: Optional[str] = None) -> int:
        """Approximate one image and write decomposition, reconstruction and report."""
        run = self._run_config()
        img = self._load_input(run, fixture, shape)
        spec = run.partition_spec(img.nz)
        names, d = run_dictionary(run.engine, run.domain, spec, run.dictionaries)
        rho = run.target.block_rho(img, spec.points, img.imax)
        cfg = run.pursuit_config(rho)

        run_kwargs = dict(
            domain=run.domain, engine=run.engine, levels=run.levels, threads=run.threads,
            progress=not run.quiet and sys.stderr.isatty(), dictionary_names=names,
        )
        if run.calibrate:
            result = calibrate_target(img, d, spec, cfg, run.target, run.calibration_tolerance, **run_kwargs)
        else:
            result = approximate_image(img, d, spec, cfg, target=run.target, **run_kwargs)
        report = result.report

        output_dir = Path(run.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        name = run.output_name or (Path(run.input).stem if run.input else f"fixture-{fixture}-{run.seed}")
        metadata = self._decomposition_metadata(report, img)
        write_decomposition(
            output_dir / f"{name}{DECOMPOSITION_SUFFIX}",
            DecompositionFile(metadata, result.decompositions),
        )
        image_path = output_dir / f"{name}_approx{self._image_suffix(run, img)}"
        save_image(result.image, image_path, dtype=img.dtype or 'u8')
        self.logger.info(f"Saved reconstruction: {image_path}")

        self.exporter.export(
            {'summary': report.to_dict()},
            output_dir / f"{name}_report",
            run.formats,
            metadata={'input': run.input or f"fixture:{fixture}", 'engine': run.engine, 'domain': run.domain},
        )
        grid = kq_grid(report.kq, report.grid)
        self.exporter.export_kq_grid(grid, output_dir / f"{name}_kq", png=run.kq_png)

        unreached = report.blocks_unreached > 0 or not run.target.met_by(report.psnr, report.snr)
        if unreached:
            message = (
                f"Quality target {run.target.kind}={run.target.value} not reached everywhere "
                f"({report.blocks_unreached} block(s) above rho)"
            )
            if run.strict:
                self.logger.error(message)
                return EXIT_QUALITY
            self.logger.warning(message)
        return EXIT_OK

    @staticmethod
    def _image_suffix(run: RunConfig, img: Image3) -> str:
        if run.input:
            suffix = Path(run.input).suffix.lower()
            if suffix:
                return suffix
        return '.ppm' if img.nz == 3 and img.dtype == 'u8' else '.cube'

    @staticmethod
    def _decomposition_metadata(report, img: Image3) -> Dict[str, Any]:
        return {
            'schema_version': report.schema_version,
            'extents': list(report.extents),
            'padded_extents': list(report.padded_extents),
            'partition': report.partition,
            'domain': report.domain,
            'levels': report.levels,
            'engine': report.engine,
            'dictionaries': list(report.dictionaries),
            'dictionary_sha256': report.dictionary_sha256,
            'imax': img.imax,
            'dtype': img.dtype or 'u8',
            'total_atoms': report.total_atoms,
            'sr': format_db(report.sr),
        }

    @staticmethod
    def _stored_partition(df: DecompositionFile) -> PartitionSpec:
        missing = [key for key in REQUIRED_METADATA if key not in df.metadata]
        if missing:
            raise FormatError(f"Decomposition metadata lacks {', '.join(missing)}")
        return PartitionSpec.parse(df.metadata['partition'])

    def cmd_reconstruct(self, decomposition: str, output: str,
                        dictionaries: Optional[str] = None) -> int:
        """Rebuild the approximated image from a decomposition file."""
        df = read_decomposition(Path(decomposition))
        meta = df.metadata
        spec = self._stored_partition(df)
        if dictionaries:
            names = ConfigManager.parse_dictionary_names(dictionaries)
        else:
            names = tuple(meta['dictionaries'])
        d = build_separable(names, spec.extents)
        df.check_dictionary(d.fingerprint())
        df.check_indices(d.counts, spec.extents)

        img = reconstruct_image(
            df.decompositions, d, meta['extents'], meta['padded_extents'], meta['domain'], meta.get('levels'),
        )
        img.imax, img.dtype = meta.get('imax'), meta.get('dtype')
        save_image(img, Path(output), dtype=meta.get('dtype') or 'u8')
        self.logger.info(f"Reconstructed {tuple(meta['extents'])} image from {df.total_atoms} atoms: {output}")
        return EXIT_OK

    def cmd_evaluate(self, reference: str, approximation: str, imax: Optional[float] = None,
                     decomposition: Optional[str] = None, kq_out: Optional[str] = None,
                     kq_png: bool = False) -> int:
        """Print PSNR, SNR and MSE as JSON; with a decomposition also K, SR and the k_q map."""
        ref = load_image(Path(reference))
        approx = load_image(Path(approximation))
        imax = imax or ref.imax
        metrics: Dict[str, Any] = {
            'mse': mse(ref, approx),
            'psnr': format_db(psnr(ref, approx, imax)) if imax else None,
            'imax': imax,
        }
        try:
            metrics['snr'] = format_db(snr(ref, approx))
        except ValueError as e:
            self.logger.warning(str(e))
            metrics['snr'] = None

        if decomposition:
            df = read_decomposition(Path(decomposition))
            spec = self._stored_partition(df)
            kq = [dc.k for dc in df.decompositions]
            total_atoms = sum(kq)
            metrics['total_points'] = ref.size
            metrics['total_atoms'] = total_atoms
            metrics['sr'] = format_db(sparsity_ratio(ref.size, total_atoms)) if total_atoms else 'inf'
            grid = kq_grid(kq, block_grid(df.metadata['padded_extents'], spec))
            metrics['kq_grid_shape'] = list(grid.shape)
            if kq_out:
                base = Path(kq_out)
                if base.suffix.lower() in ('.csv', '.png'):
                    base = base.with_suffix('')
                metrics['kq_files'] = [str(p) for p in self.exporter.export_kq_grid(grid, base, png=kq_png)]

        print(json.dumps(metrics, indent=2))
        return EXIT_OK

    def cmd_bench(self, suite_path: str, output_dir: Optional[str] = None) -> int:
        """Sweep a bench suite and write per-run rows plus aggregates."""
        suite = BenchSuite.load(Path(suite_path))
        images, missing = suite.resolve_images()
        for name in missing:
            self.logger.warning(f"Bench image missing, skipped: {name}")
        runs = list(expand_runs(suite, images))
        progress = ProgressLogger(self.logger, len(runs), "Bench")

        rows: List[Dict[str, Any]] = []
        cache: Dict[str, Image3] = {}
        threads = self.config_manager.get('threads') or os.cpu_count() or 1
        for run in runs:
            if run.image not in cache:
                cache[run.image] = load_image(run.source) if isinstance(run.source, Path) else load_fixture(run.source)
            img = cache[run.image]
            if suite.imax is not None:
                img.imax = suite.imax
            rows.append(self._bench_row(suite, run, img, int(threads)))
            progress.update(f"{run.image} {run.engine}/{run.domain} {run.block}")
        progress.complete()

        checks = direction_checks(rows)
        for check in checks:
            if not check['sr_3d_exceeds_2d']:
                self.logger.warning(
                    f"SR_3D={check['sr_3d']:.3f} does not exceed SR_2D={check['sr_2d']:.3f} "
                    f"for {check['image']} ({check['domain']}, {check['target_kind']}={check['target_value']})"
                )

        out = Path(output_dir or self.config_manager.get('output_dir') or '.')
        self.exporter.export(
            {
                'summary': {'runs': len(rows), 'missing': missing, 'aggregate': aggregate(rows),
                            'direction_checks': checks},
                'rows': rows,
                'columns': BENCH_COLUMNS,
            },
            out / 'bench',
            ['csv', 'json'],
            metadata={'suite': str(suite_path)},
        )
        return EXIT_OK

    @staticmethod
    def _bench_row(suite: BenchSuite, run: BenchRun, img: Image3, threads: int) -> Dict[str, Any]:
        if run.engine == THRESHOLD_ENGINE:
            return threshold_row(run, threshold_wavelet(img, run.target, img.imax))
        names, d = run_dictionary(run.engine, run.domain, run.spec)
        rho = run.target.block_rho(img, run.spec.points, img.imax)
        cfg = PursuitConfig(rho=rho, epsilon=suite.epsilon, max_j=suite.max_j)
        run_kwargs = dict(domain=run.domain, engine=run.engine, threads=threads, dictionary_names=names)
        if suite.calibrate:
            result = calibrate_target(img, d, run.spec, cfg, run.target, suite.calibration_tolerance, **run_kwargs)
        else:
            result = approximate_image(img, d, run.spec, cfg, target=run.target, **run_kwargs)
        return report_row(run, result.report)

    def cmd_memory(self, nb: int, redundancy: int, atoms: int,
                   index_bytes: int = 4, real_bytes: int = 8) -> int:
        """Print the itemized working-set bytes and whether they fit the shared-memory budget."""
        footprint = memory_footprint(nb, redundancy, atoms, index_bytes=index_bytes, real_bytes=real_bytes)
        width = max(len(label) for label, _ in footprint.items())
        for label, value in footprint.items():
            print(f"{label:<{width}}  {value:>10d} B")
        verdict = 'PASS' if footprint.fits else 'FAIL'
        print(f"{'budget':<{width}}  {footprint.budget:>10d} B  {verdict}")
        return EXIT_OK


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = _ArgumentParser(
        description="SPMP3D - sparse approximation of 3D images with separable dictionaries"
    )
    parser.add_argument('--config', type=str, help='Path to configuration file (.json or key-value .yaml)')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], help='Logging level')
    parser.add_argument('--log-dir', type=str, help='Directory for log files')
    parser.add_argument('--quiet', action='store_true', default=None, help='No progress bars')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)

    approx = sub.add_parser('approximate', help='Approximate an image')
    approx.add_argument('--in', dest='input', type=str, help='Input image (.ppm, .pgm, .cube, .png)')
    approx.add_argument('--fixture', choices=['rgb', 'spectral'], help='Use a synthetic fixture as input')
    approx.add_argument('--shape', type=str, help='Fixture extents, e.g. 64x64x3')
    approx.add_argument('--seed', type=int, help='Fixture seed')
    approx.add_argument('--out-dir', dest='output_dir', type=str, help='Output directory')
    approx.add_argument('--name', dest='output_name', type=str, help='Base name of output files')
    approx.add_argument('--engine', choices=ENGINE_NAMES, help='Pursuit engine')
    approx.add_argument('--domain', choices=DOMAINS, help='Pixel (pd) or wavelet (wd) domain')
    approx.add_argument('--block', type=str, help='Block size, e.g. 8x8x3 (8x8 means bz=1)')
    approx.add_argument('--dict', type=str,
                        help=f"Dictionary for all axes or one per axis, comma separated: {', '.join(DICTIONARY_NAMES)}")
    quality = approx.add_mutually_exclusive_group()
    quality.add_argument('--psnr', type=float, help='Target PSNR in dB')
    quality.add_argument('--snr', type=float, help='Target SNR in dB')
    quality.add_argument('--rho', type=float, help='Per-block residual norm target')
    approx.add_argument('--epsilon', type=float, help='Projection tolerance (default 1e-8 x block norm)')
    approx.add_argument('--max-j', dest='max_j', type=int, help='Cap on projection sweeps')
    approx.add_argument('--max-atoms', dest='max_atoms', type=int, help='Cap on atoms per block')
    approx.add_argument('--projection-period', dest='projection_period', type=int,
                        help='Project after every p selected atoms')
    approx.add_argument('--threads', type=int, help='Worker threads')
    approx.add_argument('--imax', type=float, help='Intensity range for PSNR')
    approx.add_argument('--levels', type=int, help='Wavelet levels (wd domain)')
    approx.add_argument('--strict', action='store_true', default=None, help='Exit 3 when the target is not reached')
    approx.add_argument('--formats', nargs='+', choices=EXPORT_FORMATS, help='Report formats')
    approx.add_argument('--calibrate', action='store_true', default=None,
                        help='Rescale rho until the achieved PSNR/SNR is within the tolerance above the target')
    approx.add_argument('--calibration-tolerance', dest='calibration_tolerance', type=float,
                        help='Width of the accepted band above the target in dB (default 0.5)')
    approx.add_argument('--kq-png', dest='kq_png', action='store_true', default=None,
                        help='Also write the k_q map as PNG')

    recon = sub.add_parser('reconstruct', help='Rebuild an image from a decomposition file')
    recon.add_argument('decomposition', type=str)
    recon.add_argument('--out', required=True, type=str, help='Output image path')
    recon.add_argument('--dict', type=str, help='Override dictionary names (checked against the stored hash)')

    evaluate = sub.add_parser('evaluate', help='Compare two images')
    evaluate.add_argument('reference', type=str)
    evaluate.add_argument('approximation', type=str)
    evaluate.add_argument('--imax', type=float, help='Intensity range for PSNR')
    evaluate.add_argument('--decomposition', type=str, help='Decomposition file for SR and the k_q map')
    evaluate.add_argument('--kq-out', dest='kq_out', type=str, help='Base path for the k_q map export')
    evaluate.add_argument('--kq-png', dest='kq_png', action='store_true', help='Also write the k_q map as PNG')

    bench = sub.add_parser('bench', help='Run a benchmark suite')
    bench.add_argument('suite', type=str, help='Suite file (.yaml)')
    bench.add_argument('--out-dir', dest='output_dir', type=str, help='Output directory')
    bench.add_argument('--threads', type=int, help='Worker threads')

    memory = sub.add_parser('memory', help='Working-set bytes of one block worker')
    memory.add_argument('--block', type=str, default='8', help='Block side nb (or NBxNBxNB)')
    memory.add_argument('--redundancy', type=int, default=5, help='Per-axis dictionary redundancy r')
    memory.add_argument('--atoms', type=int, default=512, help='Atoms k')
    memory.add_argument('--index-bytes', dest='index_bytes', type=int, default=4)
    memory.add_argument('--real-bytes', dest='real_bytes', type=int, default=8)

    return parser.parse_args(argv)


CONFIG_KEYS = (
    'input', 'output_dir', 'output_name', 'engine', 'domain', 'block', 'dict', 'psnr', 'snr', 'rho',
    'epsilon', 'max_j', 'max_atoms', 'projection_period', 'threads', 'imax', 'levels', 'strict',
    'formats', 'kq_png', 'seed', 'quiet', 'log_level', 'log_dir', 'calibrate', 'calibration_tolerance',
)


def _memory_side(text: str) -> int:
    sides = {int(v) for v in str(text).lower().split('x')}
    if len(sides) != 1:
        raise ConfigError(f"Memory accounting needs a cubic block, got '{text}'")
    return sides.pop()


def run_command(app: SparseApproxApp, args: argparse.Namespace) -> int:
    if args.command == 'approximate':
        return app.cmd_approximate(fixture=args.fixture, shape=args.shape)
    if args.command == 'reconstruct':
        return app.cmd_reconstruct(args.decomposition, args.out, args.dict)
    if args.command == 'evaluate':
        return app.cmd_evaluate(args.reference, args.approximation, args.imax,
                                args.decomposition, args.kq_out, args.kq_png)
    if args.command == 'bench':
        return app.cmd_bench(args.suite, args.output_dir)
    return app.cmd_memory(_memory_side(args.block), args.redundancy, args.atoms,
                          args.index_bytes, args.real_bytes)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = parse_arguments(argv)
    overrides = {key: getattr(args, key) for key in CONFIG_KEYS if hasattr(args, key)}
    if args.command != 'approximate':
        # Only approximate reads dict/imax/output_dir from flags into the run config.
        overrides = {k: v for k, v in overrides.items() if k in ('log_level', 'log_dir', 'quiet', 'threads', 'output_dir')}

    try:
        app = SparseApproxApp(args.config, overrides)
        return run_command(app, args)
    except KeyboardInterrupt:
        logging.info("Interrupted by user")
        return EXIT_USAGE
    except (ConfigError, WaveletError) as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except (FileNotFoundError, OSError, FormatError, DictionaryMismatchError) as e:
        logging.error(f"I/O error: {e}")
        return EXIT_IO
    except SparseApproxError as e:
        logging.error(f"Error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
