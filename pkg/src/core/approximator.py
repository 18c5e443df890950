"""
Whole-image approximation pipeline.

The image is optionally moved to the wavelet domain, cut into blocks, every
block is approximated independently by one of the pursuit engines, and the
approximations are tiled back, returned to the pixel domain and measured.
"""

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from core.dictionary import SeparableDictionary3, build_separable
from core.exceptions import ConfigError, DimensionMismatchError
from core.metrics import format_db, mse, parse_db, psnr, snr, sparsity_ratio
from core.partition import (
    PartitionSpec, assemble, block_grid, crop_image, pad_image, padded_extents, partition,
)
from core.pursuit import (
    ENGINES, AtomicDecomposition, PursuitConfig, rho_from_psnr, rho_from_snr,
)
from core.tensor import Block3, Image3
from core.wavelet import WaveletSpec, default_levels, forward_planes, inverse_planes

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENGINE_NAMES = ('spmp3d', 'mp3d', 'omp3d', 'omp2d')
DOMAINS = ('pd', 'wd')
TARGET_KINDS = ('psnr', 'snr', 'rho')


@dataclass(frozen=True)
class QualityTarget:
    """Global quality goal: a PSNR or SNR in dB, or a raw per-block rho."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigError(f"Quality target must be one of {TARGET_KINDS}, got '{self.kind}'")
        if self.kind == 'rho' and self.value < 0:
            raise ConfigError(f"rho must be >= 0, got {self.value}")

    def block_rho(self, img: Image3, block_points: int, imax: Optional[float]) -> float:
        """Per-block residual norm that delivers this target when every block meets it."""
        if self.kind == 'rho':
            return self.value
        if self.kind == 'psnr':
            if not imax:
                raise ConfigError("A PSNR target needs imax; set it or load an integer image")
            return rho_from_psnr(self.value, block_points, imax)
        energy = float(np.vdot(img.planes, img.planes))
        return rho_from_snr(self.value, energy, img.size, block_points)

    def met_by(self, psnr_db: float, snr_db: float) -> bool:
        if self.kind == 'psnr':
            return psnr_db >= self.value
        if self.kind == 'snr':
            return snr_db >= self.value
        return True

    def as_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'value': self.value}


@dataclass
class ApproximationReport:
    """Per-image metrics of one approximation run. SR = N / K with K = Σ k_q."""

    extents: Tuple[int, int, int]
    padded_extents: Tuple[int, int, int]
    partition: str
    grid: Tuple[int, int, int]
    domain: str
    engine: str
    kq: List[int]
    total_points: int
    total_atoms: int
    sr: float
    mse: float
    psnr: float
    snr: float
    elapsed_seconds: float
    imax: Optional[float] = None
    levels: Optional[int] = None
    dictionaries: Tuple[str, str, str] = ('', '', '')
    dictionary_sha256: str = ''
    blocks_unreached: int = 0
    target: Optional[Dict[str, Any]] = None
    schema_version: int = SCHEMA_VERSION
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key in ('sr', 'psnr', 'snr'):
            data[key] = format_db(data[key])
        for key in ('extents', 'padded_extents', 'grid', 'dictionaries'):
            data[key] = list(data[key])
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ApproximationReport":
        data = dict(data)
        if data.get('schema_version') != SCHEMA_VERSION:
            raise ValueError(f"Unsupported report schema_version {data.get('schema_version')}")
        for key in ('sr', 'psnr', 'snr'):
            data[key] = parse_db(data[key])
        for key in ('extents', 'padded_extents', 'grid', 'dictionaries'):
            data[key] = tuple(data[key])
        return cls(**data)

    def summary(self) -> str:
        return (
            f"{self.engine}/{self.domain} {self.partition}: K={self.total_atoms}, SR={self.sr:.3f}, "
            f"PSNR={self.psnr:.2f} dB, SNR={self.snr:.2f} dB, {self.elapsed_seconds:.2f} s"
        )


class ApproximationResult(NamedTuple):
    image: Image3
    report: ApproximationReport
    decompositions: List[AtomicDecomposition]


def working_layout(extents: Sequence[int], spec: PartitionSpec, domain: str,
                   levels: Optional[int] = None) -> Tuple[Tuple[int, int, int], Optional[int]]:
    """Padded extents and wavelet depth the pipeline runs at.

    In the wavelet domain the x and y extents must also be divisible by
    2^levels; the default depth is the deepest one the block-padded
    extents allow.
    """
    padded = padded_extents(extents, spec)
    if domain != 'wd':
        return padded, None
    if levels is None:
        levels = default_levels(padded[:2])
    factor = 2 ** levels
    return padded_extents(extents, spec, multiples=(factor, factor, 1)), levels


def block_config(cfg: PursuitConfig, block: Block3, scale_to_valid: bool) -> PursuitConfig:
    """Per-block configuration.

    With ``scale_to_valid`` a block that overlaps the padding gets rho scaled
    by sqrt(valid / points), so the error spent on padded samples cannot eat
    into the budget of the samples that are measured.
    """
    if not scale_to_valid or not block.has_padding:
        return cfg
    share = math.prod(block.valid) / block.size
    return replace(cfg, rho=cfg.rho * math.sqrt(share))


def _run_blocks(blocks, d: SeparableDictionary3, cfg: PursuitConfig, engine_fn,
                threads: int, progress: bool,
                scale_to_valid: bool = False) -> List[AtomicDecomposition]:
    def work(block):
        return engine_fn(block, d, block_config(cfg, block, scale_to_valid))

    with tqdm(total=len(blocks), desc="Blocks", unit="block", disable=not progress) as bar:
        if threads <= 1:
            results = []
            for block in blocks:
                results.append(work(block))
                bar.update(1)
            return results
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = []
            # map keeps block order regardless of completion order
            for decomp in executor.map(work, blocks):
                results.append(decomp)
                bar.update(1)
            return results


def approximate_image(img: Image3, d: SeparableDictionary3, spec: PartitionSpec,
                      cfg: PursuitConfig, domain: str = 'pd', engine: str = 'spmp3d',
                      levels: Optional[int] = None, threads: Optional[int] = None,
                      progress: bool = False, target: Optional[QualityTarget] = None,
                      dictionary_names: Tuple[str, str, str] = ('', '', '')) -> ApproximationResult:
    """Approximate ``img`` block by block.

    ``cfg.rho`` is the per-block target. When ``target`` is a PSNR or SNR
    goal, blocks that overlap the padding use a proportionally smaller rho
    (see block_config); a raw rho target is applied as given.
    ``engine='omp2d'`` is the channel-by-channel baseline and needs bz = 1.
    """
    if engine not in ENGINE_NAMES:
        raise ConfigError(f"Unknown engine '{engine}', expected one of {ENGINE_NAMES}")
    if domain not in DOMAINS:
        raise ConfigError(f"Unknown domain '{domain}', expected one of {DOMAINS}")
    if engine == 'omp2d' and spec.bz != 1:
        raise ConfigError(f"The omp2d engine works on 2D blocks; got block {spec}")
    if d.extents != spec.extents:
        raise DimensionMismatchError("dictionary vs block extents", d.extents, spec.extents)
    threads = threads or os.cpu_count() or 1
    engine_fn = ENGINES['spmp3d' if engine == 'omp2d' else engine]

    start = time.perf_counter()
    padded, levels = working_layout(img.extents, spec, domain, levels)
    logger.info(
        f"Approximating {img.extents} image: engine {engine}, domain {domain}, block {spec}, "
        f"rho {cfg.rho:.6g}, {threads} thread(s)"
    )

    if domain == 'wd':
        source = pad_image(img, padded)
        work_image = Image3(forward_planes(source.planes, WaveletSpec(levels)))
    else:
        work_image = img

    blocks = partition(work_image, spec, padded)
    scale_to_valid = target is not None and target.kind != 'rho'
    decompositions = _run_blocks(blocks, d, cfg, engine_fn, threads, progress, scale_to_valid)

    approx = reconstruct_image(decompositions, d, img.extents, padded, domain, levels)
    approx.imax, approx.dtype = img.imax, img.dtype
    elapsed = time.perf_counter() - start

    report = build_report(
        img, approx, decompositions, spec, padded, domain, engine, elapsed,
        levels=levels, d=d, dictionary_names=dictionary_names, target=target,
    )
    if report.blocks_unreached:
        logger.warning(f"{report.blocks_unreached} block(s) stopped before reaching rho={cfg.rho:.6g}")
    logger.info(report.summary())
    return ApproximationResult(approx, report, decompositions)


DEFAULT_CALIBRATION_TOLERANCE = 0.5
DEFAULT_CALIBRATION_ROUNDS = 12


def calibrate_target(img: Image3, d: SeparableDictionary3, spec: PartitionSpec,
                     cfg: PursuitConfig, target: QualityTarget,
                     tolerance: float = DEFAULT_CALIBRATION_TOLERANCE,
                     max_rounds: int = DEFAULT_CALIBRATION_ROUNDS,
                     **run_kwargs) -> ApproximationResult:
    """Rescale the per-block rho until the achieved quality is just above ``target``.

    Blocks usually finish below rho, and in the wavelet domain the pixel
    error is not the coefficient error, so a per-block rho overshoots the
    global PSNR or SNR by an amount that differs between engines. Here one
    scale s multiplies ``cfg.rho`` for every block and is searched until the
    achieved value lies in [target, target + tolerance]. Quality falls as s
    grows: each round steps s by the remaining dB gap, kept inside the
    bracket of scales already seen to meet and miss the target.

    Args:
        img, d, spec, cfg: As for approximate_image; ``cfg.rho`` is the starting point
        target: PSNR or SNR goal
        tolerance: Width in dB of the accepted band above the target
        max_rounds: Cap on full approximation runs
        **run_kwargs: Passed to approximate_image (domain, engine, levels, ...)

    Returns:
        The run that meets the target with the largest scale. Its
        ``report.extra`` holds ``rho_scale``, ``calibration_rounds`` and
        ``calibrated`` (True when the value landed inside the band).
    """
    if target.kind == 'rho':
        raise ConfigError("Calibration needs a PSNR or SNR target")
    if not tolerance > 0:
        raise ConfigError(f"Calibration tolerance must be > 0 dB, got {tolerance}")
    if max_rounds < 1:
        raise ConfigError(f"max_rounds must be >= 1, got {max_rounds}")
    if not cfg.rho > 0:
        raise ConfigError("Calibration needs a positive starting rho")

    def achieved(report: ApproximationReport) -> float:
        return report.psnr if target.kind == 'psnr' else report.snr

    goal = target.value + tolerance / 2
    meets: Optional[float] = None
    misses: Optional[float] = None
    best: Optional[Tuple[float, ApproximationResult]] = None
    last: Optional[Tuple[float, ApproximationResult]] = None
    within = False
    scale = 1.0
    rounds = 0

    while rounds < max_rounds:
        rounds += 1
        result = approximate_image(img, d, spec, replace(cfg, rho=cfg.rho * scale),
                                   target=target, **run_kwargs)
        value = achieved(result.report)
        last = (scale, result)
        logger.debug(f"Calibration round {rounds}: rho scale {scale:.6g} gives {target.kind} {value:.3f} dB")

        if value >= target.value:
            if best is None or scale > best[0]:
                best = (scale, result)
            if value <= target.value + tolerance:
                best, within = (scale, result), True
                break
            meets = scale if meets is None else max(meets, scale)
        else:
            misses = scale if misses is None else min(misses, scale)

        # Residual norms scale with rho, so 20 log10(s) dB is the first-order step.
        step = 10 ** ((value - goal) / 20) if math.isfinite(value) else 2.0
        proposal = scale * step
        if meets is not None and misses is not None:
            if not meets < proposal < misses:
                proposal = math.sqrt(meets * misses)
            if misses / meets < 1 + 1e-9:
                break
        scale = proposal

    chosen_scale, chosen = best if best is not None else last
    chosen.report.extra.update({
        'rho_scale': chosen_scale,
        'calibration_rounds': rounds,
        'calibrated': within,
    })
    if not within:
        logger.warning(
            f"Calibration stopped after {rounds} round(s) without landing in "
            f"[{target.value}, {target.value + tolerance}] dB; keeping rho scale {chosen_scale:.6g}"
        )
    else:
        logger.info(f"Calibrated rho scale {chosen_scale:.6g} in {rounds} round(s)")
    return chosen


def reconstruct_image(decompositions: Sequence[AtomicDecomposition], d: SeparableDictionary3,
                      extents: Sequence[int], padded: Sequence[int], domain: str,
                      levels: Optional[int] = None) -> Image3:
    """Tile the block approximations and return them to the pixel domain, cropped to ``extents``."""
    approx = assemble(decompositions, d, padded, padded)
    if domain == 'wd':
        approx = Image3(inverse_planes(approx.planes, WaveletSpec(levels)))
    return crop_image(approx, extents)


def build_report(img: Image3, approx: Image3, decompositions: Sequence[AtomicDecomposition],
                 spec: PartitionSpec, padded: Sequence[int], domain: str, engine: str,
                 elapsed: float, levels: Optional[int] = None,
                 d: Optional[SeparableDictionary3] = None,
                 dictionary_names: Tuple[str, str, str] = ('', '', ''),
                 target: Optional[QualityTarget] = None) -> ApproximationReport:
    kq = [dc.k for dc in decompositions]
    total_atoms = int(sum(kq))
    total_points = img.size
    ref_energy = float(np.vdot(img.planes, img.planes))
    return ApproximationReport(
        extents=img.extents,
        padded_extents=tuple(int(p) for p in padded),
        partition=str(spec),
        grid=block_grid(padded, spec),
        domain=domain,
        engine=engine,
        kq=kq,
        total_points=total_points,
        total_atoms=total_atoms,
        sr=sparsity_ratio(total_points, total_atoms) if total_atoms else math.inf,
        mse=mse(img, approx),
        psnr=psnr(img, approx, img.imax) if img.imax else math.nan,
        snr=snr(img, approx) if ref_energy > 0 else math.nan,
        elapsed_seconds=elapsed,
        imax=img.imax,
        levels=levels,
        dictionaries=tuple(dictionary_names),
        dictionary_sha256=d.fingerprint() if d is not None else '',
        blocks_unreached=sum(1 for dc in decompositions if not dc.reached_target),
        target=target.as_dict() if target is not None else None,
    )


class ThresholdResult(NamedTuple):
    image: Image3
    total_atoms: int
    sr: float
    psnr: float
    snr: float
    levels: int
    total_points: int = 0
    elapsed_seconds: float = 0.0


def _keep_largest(coeffs: np.ndarray, order: np.ndarray, k: int) -> np.ndarray:
    kept = np.zeros_like(coeffs)
    flat = kept.reshape(-1)
    chosen = order[:k]
    flat[chosen] = coeffs.reshape(-1)[chosen]
    return kept


def threshold_wavelet(img: Image3, target: QualityTarget, imax: Optional[float] = None,
                      levels: Optional[int] = None) -> ThresholdResult:
    """Keep the K largest CDF 9/7 coefficients over all channels.

    K is the smallest count (found by bisection) whose pixel-domain
    reconstruction meets ``target``.
    """
    if target.kind == 'rho':
        raise ConfigError("Wavelet thresholding needs a PSNR or SNR target")
    start = time.perf_counter()
    imax = imax or img.imax
    if levels is None:
        levels = default_levels(padded_extents(img.extents, PartitionSpec(2, 2, 1))[:2])
    factor = 2 ** levels
    padded = padded_extents(img.extents, PartitionSpec(factor, factor, 1))
    wavelet = WaveletSpec(levels)
    coeffs = forward_planes(pad_image(img, padded).planes, wavelet)
    order = np.argsort(-np.abs(coeffs).reshape(-1), kind='stable')

    def evaluate(k: int) -> Tuple[Image3, float, float]:
        kept = _keep_largest(coeffs, order, k)
        approx = crop_image(Image3(inverse_planes(kept, wavelet)), img.extents)
        p = psnr(img, approx, imax) if imax else math.nan
        s = snr(img, approx)
        return approx, p, s

    lo, hi = 1, coeffs.size
    while lo < hi:
        mid = (lo + hi) // 2
        _, p, s = evaluate(mid)
        if target.met_by(p, s):
            hi = mid
        else:
            lo = mid + 1
    approx, p, s = evaluate(lo)
    logger.info(f"Wavelet thresholding keeps K={lo} coefficients, PSNR={p:.2f} dB, SNR={s:.2f} dB")
    return ThresholdResult(approx, lo, sparsity_ratio(img.size, lo), p, s, levels,
                           img.size, time.perf_counter() - start)


FIXTURE_KINDS = ('rgb', 'spectral')


def make_fixture(seed: int = 0, shape: Tuple[int, int, int] = (64, 64, 3), kind: str = 'rgb') -> Image3:
    """Deterministic piecewise-smooth test image with correlated channels.

    ``rgb`` gives 8-bit samples whose channels are scaled copies of one
    luminance field plus small smooth offsets. ``spectral`` mixes three
    smooth endmember spectra with smooth abundance maps into 16-bit samples.
    """
    if kind not in FIXTURE_KINDS:
        raise ValueError(f"Unknown fixture kind '{kind}', expected one of {FIXTURE_KINDS}")
    nx, ny, nz = shape
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, nx)[:, None]
    y = np.linspace(0.0, 1.0, ny)[None, :]

    def smooth_field(terms: int) -> np.ndarray:
        field_ = np.zeros((nx, ny))
        for _ in range(terms):
            fx, fy = rng.uniform(0.3, 2.5, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            field_ += rng.uniform(0.5, 1.0) * np.cos(np.pi * (fx * x + fy * y) + phase)
        return field_

    luminance = smooth_field(3)
    # Piecewise part: a few axis-aligned patches with constant offsets.
    for _ in range(3):
        x0, y0 = rng.integers(0, nx // 2), rng.integers(0, ny // 2)
        w, h = rng.integers(nx // 8 + 1, nx // 2 + 1), rng.integers(ny // 8 + 1, ny // 2 + 1)
        luminance[x0:x0 + w, y0:y0 + h] += rng.uniform(-1.0, 1.0)
    luminance += 0.05 * np.sin(2 * np.pi * 6 * x) * np.sin(2 * np.pi * 5 * y)

    if kind == 'rgb':
        gains = rng.uniform(0.8, 1.2, size=nz)
        channels = [gains[c] * luminance + 0.1 * smooth_field(1) for c in range(nz)]
        stack = np.stack(channels)
        stack = (stack - stack.min()) / (stack.max() - stack.min())
        planes = np.rint(20 + 215 * stack)
        return Image3(planes, imax=255.0, dtype='u8')

    bands = np.linspace(0.0, 1.0, nz)
    centers = rng.uniform(0.1, 0.9, size=3)
    endmembers = np.exp(-((bands[None, :] - centers[:, None]) ** 2) / 0.08)
    abundances = np.stack([np.exp(luminance), np.exp(smooth_field(2)), np.exp(-luminance)])
    abundances /= abundances.sum(axis=0, keepdims=True)
    cube = np.einsum('eb,exy->bxy', endmembers, abundances)
    cube = (cube - cube.min()) / (cube.max() - cube.min())
    planes = np.rint(100 + 3900 * cube)
    return Image3(planes, imax=65535.0, dtype='u16')


def default_dictionary_names(engine: str, domain: str) -> Tuple[str, str, str]:
    """3D engines use the thin trigonometric+Dirac union on every axis.

    The channel-by-channel baseline uses the mixed dictionary of its domain
    on x and y and the single Dirac atom on z.
    """
    if engine == 'omp2d':
        return f'mixed-{domain}', f'mixed-{domain}', 'dirac'
    return 'thin3d', 'thin3d', 'thin3d'


def run_dictionary(engine: str, domain: str, spec: PartitionSpec,
                   names: Optional[Sequence[str]] = None) -> Tuple[Tuple[str, str, str], SeparableDictionary3]:
    """Dictionary names and the separable dictionary for one run."""
    names = tuple(names) if names else default_dictionary_names(engine, domain)
    if len(names) != 3:
        raise ConfigError(f"Need one dictionary name per axis, got {names}")
    return names, build_separable(names, spec.extents)
