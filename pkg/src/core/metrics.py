"""
Quality and sparsity metrics: MSE, PSNR, SNR, SR and the k_q sparsity map.
"""

import math
from typing import Sequence, Tuple, Union

import numpy as np

from core.exceptions import DimensionMismatchError
from core.tensor import Image3

ArrayLike = Union[Image3, np.ndarray]


def _as_array(img: ArrayLike) -> np.ndarray:
    return img.planes if isinstance(img, Image3) else np.asarray(img, dtype=np.float64)


def _pair(ref: ArrayLike, approx: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    a, b = _as_array(ref), _as_array(approx)
    if a.shape != b.shape:
        raise DimensionMismatchError("reference vs approximation", a.shape, b.shape)
    return a, b


def squared_error(ref: ArrayLike, approx: ArrayLike) -> float:
    """‖I - I^K‖² over all points."""
    a, b = _pair(ref, approx)
    diff = a - b
    return float(np.vdot(diff, diff))


def mse(ref: ArrayLike, approx: ArrayLike) -> float:
    """Mean squared error ‖I - I^K‖² / N."""
    a, _ = _pair(ref, approx)
    return squared_error(ref, approx) / a.size


def psnr(ref: ArrayLike, approx: ArrayLike, imax: float) -> float:
    """10 log10(imax² / MSE) in dB; inf for identical images."""
    if not imax > 0:
        raise ValueError(f"imax must be positive, got {imax}")
    error = mse(ref, approx)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(imax ** 2 / error)


def snr(ref: ArrayLike, approx: ArrayLike) -> float:
    """10 log10(‖I‖² / ‖I - I^K‖²) in dB; inf for identical images."""
    a, _ = _pair(ref, approx)
    energy = float(np.vdot(a, a))
    if energy == 0.0:
        raise ValueError("SNR is undefined for an all-zero reference image")
    error = squared_error(ref, approx)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(energy / error)


def sparsity_ratio(n: int, k: int) -> float:
    """SR = N / K."""
    if k < 1:
        raise ValueError(f"Sparsity ratio is undefined for K={k}")
    return n / k


def kq_grid(kq: Sequence[int], grid: Sequence[int]) -> np.ndarray:
    """Qx x Qy map of atoms per block, averaged over the Qz block layers.

    ``kq`` is in partition order (z-major, then x, then y).
    """
    qx, qy, qz = (int(q) for q in grid)
    counts = np.asarray(kq, dtype=np.float64)
    if counts.size != qx * qy * qz:
        raise DimensionMismatchError("k_q count vs block grid", (counts.size,), (qx, qy, qz))
    return counts.reshape(qz, qx, qy).mean(axis=0)


def format_db(value: float) -> Union[float, str]:
    """JSON-safe dB value: the infinite sentinel becomes the string ``"inf"``."""
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def parse_db(value: Union[float, str]) -> float:
    return float(value)
