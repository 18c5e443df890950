"""
CDF 9/7 biorthogonal wavelet transform, applied to one 2D channel at a time.

Lifting implementation with symmetric whole-point extension. Levels are
stored in the usual Mallat layout: after each level the low-low band sits in
the top-left quarter of the region that was transformed.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from core.exceptions import WaveletError

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = 5


class LiftingStage(NamedTuple):
    """One lifting step: ``target`` band += weight * (left + right neighbour of the other band)."""

    target: str
    weight: float


CDF97_STAGES = (
    LiftingStage('odd', -1.586134342059924),
    LiftingStage('even', -0.052980118572961),
    LiftingStage('odd', 0.882911075530934),
    LiftingStage('even', 0.443506852043971),
)
CDF97_SCALE = 1.149604398860241


@dataclass(frozen=True)
class WaveletSpec:
    levels: int = DEFAULT_LEVELS
    boundary: str = 'symmetric'

    def __post_init__(self):
        if self.levels < 1:
            raise WaveletError(f"Wavelet levels must be >= 1, got {self.levels}")
        if self.boundary != 'symmetric':
            raise WaveletError(f"Only symmetric boundary extension is supported, got '{self.boundary}'")

    @property
    def factor(self) -> int:
        return 2 ** self.levels

    def check(self, shape: Tuple[int, ...]):
        for extent in shape:
            if extent % self.factor != 0:
                raise WaveletError(
                    f"Channel extents {tuple(shape)} are not divisible by 2^{self.levels}={self.factor}; "
                    f"pad the image to a multiple of {self.factor} or lower the number of levels"
                )


def default_levels(shape: Tuple[int, ...], max_levels: int = DEFAULT_LEVELS) -> int:
    """Deepest level count <= max_levels that divides every extent and leaves bands of >= 2 samples."""
    levels = 0
    while levels < max_levels and all(e % 2 ** (levels + 1) == 0 and e // 2 ** (levels + 1) >= 2 for e in shape):
        levels += 1
    return max(levels, 1)


def _neighbour_sum(band: np.ndarray, target: str) -> np.ndarray:
    # Whole-point symmetry: x[n] mirrors x[n-2] at the right edge and x[-1]
    # mirrors x[1] at the left edge.
    if target == 'odd':
        right = np.concatenate([band[1:], band[-1:]], axis=0)
        return band + right
    left = np.concatenate([band[:1], band[:-1]], axis=0)
    return left + band


def _analyze(x: np.ndarray) -> np.ndarray:
    """One level along axis 0: low band in the first half, high band in the second."""
    even = x[0::2].copy()
    odd = x[1::2].copy()
    for stage in CDF97_STAGES:
        if stage.target == 'odd':
            odd += stage.weight * _neighbour_sum(even, 'odd')
        else:
            even += stage.weight * _neighbour_sum(odd, 'even')
    return np.concatenate([even * CDF97_SCALE, odd / CDF97_SCALE], axis=0)


def _synthesize(y: np.ndarray) -> np.ndarray:
    half = y.shape[0] // 2
    even = y[:half] / CDF97_SCALE
    odd = y[half:] * CDF97_SCALE
    for stage in reversed(CDF97_STAGES):
        if stage.target == 'odd':
            odd -= stage.weight * _neighbour_sum(even, 'odd')
        else:
            even -= stage.weight * _neighbour_sum(odd, 'even')
    out = np.empty_like(y)
    out[0::2] = even
    out[1::2] = odd
    return out


def cdf97_forward(channel: np.ndarray, spec: WaveletSpec = WaveletSpec()) -> np.ndarray:
    """Multi-level separable forward transform of a 2D channel."""
    coeffs = np.array(channel, dtype=np.float64)
    if coeffs.ndim != 2:
        raise WaveletError(f"cdf97_forward expects a 2D channel, got shape {coeffs.shape}")
    spec.check(coeffs.shape)
    h, w = coeffs.shape
    for _ in range(spec.levels):
        region = coeffs[:h, :w]
        region = _analyze(region)
        region = _analyze(region.T).T
        coeffs[:h, :w] = region
        h, w = h // 2, w // 2
    return coeffs


def cdf97_inverse(coeffs: np.ndarray, spec: WaveletSpec = WaveletSpec()) -> np.ndarray:
    """Exact inverse of cdf97_forward for the same spec."""
    channel = np.array(coeffs, dtype=np.float64)
    if channel.ndim != 2:
        raise WaveletError(f"cdf97_inverse expects a 2D array, got shape {channel.shape}")
    spec.check(channel.shape)
    h, w = channel.shape
    for level in reversed(range(spec.levels)):
        sh, sw = h >> level, w >> level
        region = channel[:sh, :sw]
        region = _synthesize(region.T).T
        region = _synthesize(region)
        channel[:sh, :sw] = region
    return channel


def forward_planes(planes: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    """Transform every z-plane of an (nz, nx, ny) stack independently."""
    return np.stack([cdf97_forward(p, spec) for p in planes])


def inverse_planes(planes: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    return np.stack([cdf97_inverse(p, spec) for p in planes])


def detail_mask(shape: Tuple[int, int], levels: int) -> np.ndarray:
    """Boolean mask of detail coefficients (everything but the coarsest low-low band)."""
    mask = np.ones(shape, dtype=bool)
    mask[:shape[0] >> levels, :shape[1] >> levels] = False
    return mask
