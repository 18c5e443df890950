"""
Benchmark suites: sweeps of engines x domains x block sizes x quality targets.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Tuple

import pandas as pd
import yaml

from core.approximator import (
    DEFAULT_CALIBRATION_TOLERANCE, ENGINE_NAMES, ApproximationReport, QualityTarget, ThresholdResult,
    make_fixture,
)
from core.exceptions import ConfigError
from core.metrics import format_db
from core.partition import PartitionSpec

logger = logging.getLogger(__name__)

BENCH_COLUMNS = [
    'image', 'engine', 'domain', 'block', 'target_kind', 'target_value',
    'total_points', 'total_atoms', 'sr', 'psnr', 'snr', 'elapsed_seconds', 'blocks_unreached',
    'rho_scale',
]
THREE_D_ENGINES = ('spmp3d', 'mp3d', 'omp3d')
# Keep-the-largest wavelet thresholding: one run per image and target, no blocks.
THRESHOLD_ENGINE = 'threshold'
THRESHOLD_BLOCK = 'whole'
BENCH_ENGINES = ENGINE_NAMES + (THRESHOLD_ENGINE,)


@dataclass
class BenchSuite:
    """Images (files or synthetic fixtures) and the parameter grid to sweep."""

    images: List[str] = field(default_factory=list)
    fixtures: List[Dict[str, Any]] = field(default_factory=list)
    engines: List[str] = field(default_factory=lambda: ['spmp3d', 'omp2d'])
    domains: List[str] = field(default_factory=lambda: ['wd'])
    blocks: List[str] = field(default_factory=lambda: ['8x8x3'])
    targets: List[Dict[str, float]] = field(default_factory=lambda: [{'psnr': 45.0}])
    dataset_dir: Optional[str] = None
    epsilon: Optional[float] = None
    max_j: int = 1000
    imax: Optional[float] = None
    calibrate: bool = False
    calibration_tolerance: float = DEFAULT_CALIBRATION_TOLERANCE

    @classmethod
    def load(cls, path: Path) -> "BenchSuite":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Bench suite not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"Bench suite {path} must be a mapping")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown bench suite keys: {', '.join(sorted(unknown))}")
        suite = cls(**data)
        if suite.dataset_dir is None:
            suite.dataset_dir = str(path.parent)
        suite.validate()
        return suite

    def validate(self):
        for engine in self.engines:
            if engine not in BENCH_ENGINES:
                raise ConfigError(f"Unknown engine '{engine}' in bench suite")
        for block in self.blocks:
            PartitionSpec.parse(block)
        needs_db = self.calibrate or THRESHOLD_ENGINE in self.engines
        for target in self.targets:
            if self.parse_target(target).kind == 'rho' and needs_db:
                raise ConfigError("Calibration and the threshold engine need psnr or snr targets")
        if not self.calibration_tolerance > 0:
            raise ConfigError(f"calibration_tolerance must be > 0 dB, got {self.calibration_tolerance}")

    @staticmethod
    def parse_target(target: Dict[str, float]) -> QualityTarget:
        if not isinstance(target, dict) or len(target) != 1:
            raise ConfigError(f"Bench target must be a single mapping like {{psnr: 45}}, got {target}")
        (kind, value), = target.items()
        return QualityTarget(kind, float(value))

    def resolve_images(self) -> Tuple[List[Path], List[str]]:
        """Existing image paths and the names of missing ones."""
        base = Path(self.dataset_dir or '.')
        found, missing = [], []
        for name in self.images:
            path = Path(name)
            path = path if path.is_absolute() else base / path
            (found if path.exists() else missing).append(path if path.exists() else str(path))
        return found, missing


class BenchRun(NamedTuple):
    image: str
    source: Any
    engine: str
    domain: str
    spec: Optional[PartitionSpec]
    target: QualityTarget

    @property
    def block(self) -> str:
        return str(self.spec) if self.spec is not None else THRESHOLD_BLOCK


def fixture_name(fixture: Dict[str, Any]) -> str:
    shape = 'x'.join(str(s) for s in fixture.get('shape', (64, 64, 3)))
    return f"fixture-{fixture.get('kind', 'rgb')}-{fixture.get('seed', 0)}-{shape}"


def load_fixture(fixture: Dict[str, Any]):
    return make_fixture(
        seed=int(fixture.get('seed', 0)),
        shape=tuple(fixture.get('shape', (64, 64, 3))),
        kind=fixture.get('kind', 'rgb'),
    )


def expand_runs(suite: BenchSuite, images: List[Path]) -> Iterator[BenchRun]:
    """Every (image, engine, domain, block, target) combination.

    The 2D baseline runs each listed block with bz forced to 1. The
    threshold engine runs once per image and target, in the wavelet domain
    and without blocks.
    """
    sources = [(str(p), p) for p in images] + [(fixture_name(f), f) for f in suite.fixtures]
    block_engines = [e for e in suite.engines if e != THRESHOLD_ENGINE]
    for name, source in sources:
        if THRESHOLD_ENGINE in suite.engines:
            for target in suite.targets:
                yield BenchRun(name, source, THRESHOLD_ENGINE, 'wd', None, suite.parse_target(target))
        for domain in suite.domains:
            for target in suite.targets:
                seen_2d = set()
                for block in suite.blocks:
                    spec = PartitionSpec.parse(block)
                    for engine in block_engines:
                        run_spec = spec
                        if engine == 'omp2d':
                            run_spec = PartitionSpec(spec.bx, spec.by, 1)
                            if run_spec.extents in seen_2d:
                                continue
                            seen_2d.add(run_spec.extents)
                        yield BenchRun(name, source, engine, domain, run_spec, suite.parse_target(target))


def report_row(run: BenchRun, report: ApproximationReport) -> Dict[str, Any]:
    return {
        'image': run.image,
        'engine': run.engine,
        'domain': run.domain,
        'block': run.block,
        'target_kind': run.target.kind,
        'target_value': run.target.value,
        'total_points': report.total_points,
        'total_atoms': report.total_atoms,
        'sr': format_db(report.sr),
        'psnr': format_db(report.psnr),
        'snr': format_db(report.snr),
        'elapsed_seconds': round(report.elapsed_seconds, 4),
        'blocks_unreached': report.blocks_unreached,
        'rho_scale': report.extra.get('rho_scale', 1.0),
    }


def threshold_row(run: BenchRun, result: ThresholdResult) -> Dict[str, Any]:
    return {
        'image': run.image,
        'engine': run.engine,
        'domain': run.domain,
        'block': run.block,
        'target_kind': run.target.kind,
        'target_value': run.target.value,
        'total_points': result.total_points,
        'total_atoms': result.total_atoms,
        'sr': format_db(result.sr),
        'psnr': format_db(result.psnr),
        'snr': format_db(result.snr),
        'elapsed_seconds': round(result.elapsed_seconds, 4),
        'blocks_unreached': 0,
        'rho_scale': None,
    }


def aggregate(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Mean and standard deviation of SR and time over images, per configuration."""
    if not rows:
        return []
    frame = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    frame['sr'] = pd.to_numeric(frame['sr'], errors='coerce')
    keys = ['engine', 'domain', 'block', 'target_kind', 'target_value']
    grouped = frame.groupby(keys, sort=False).agg(
        images=('image', 'count'),
        sr_mean=('sr', 'mean'),
        sr_std=('sr', 'std'),
        time_mean=('elapsed_seconds', 'mean'),
    ).reset_index()
    grouped['sr_std'] = grouped['sr_std'].fillna(0.0)
    # to_json yields plain Python numbers for the JSON and YAML exporters.
    return json.loads(grouped.to_json(orient='records'))


def direction_checks(rows: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Per (image, domain, target): does the best 3D run beat the 2D baseline's SR?"""
    if not rows:
        return []
    frame = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    frame['sr'] = pd.to_numeric(frame['sr'], errors='coerce')
    checks = []
    for (image, domain, kind, value), group in frame.groupby(
            ['image', 'domain', 'target_kind', 'target_value'], sort=False):
        sr_3d = group[group['engine'].isin(THREE_D_ENGINES)]['sr']
        sr_2d = group[group['engine'] == 'omp2d']['sr']
        if sr_3d.empty or sr_2d.empty:
            continue
        checks.append({
            'image': image,
            'domain': domain,
            'target_kind': kind,
            'target_value': float(value),
            'sr_3d': float(sr_3d.max()),
            'sr_2d': float(sr_2d.max()),
            'sr_3d_exceeds_2d': bool(sr_3d.max() > sr_2d.max()),
        })
    return checks
