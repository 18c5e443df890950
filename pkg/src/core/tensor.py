"""
Dense 3D arrays and the separable inner-product kernels.

Arrays are stored plane by plane: ``planes`` has shape ``(nz, nx, ny)`` so
that ``planes[s]`` is the contiguous 2D slice I(:, :, s).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.exceptions import DimensionMismatchError


@dataclass(eq=False)
class Image3:
    """3D intensity array I of extents (nx, ny, nz).

    ``imax`` is the intensity range used by PSNR and ``dtype`` the sample
    type the data was loaded from (u8, u16 or f32), when known.
    """

    planes: np.ndarray
    imax: Optional[float] = None
    dtype: Optional[str] = None

    def __post_init__(self):
        planes = np.ascontiguousarray(self.planes, dtype=np.float64)
        if planes.ndim != 3 or min(planes.shape) < 1:
            raise ValueError(f"Image3 needs a non-empty 3D array, got shape {planes.shape}")
        if not np.all(np.isfinite(planes)):
            raise ValueError("Image3 values must be finite")
        self.planes = planes

    @classmethod
    def from_xyz(cls, array: np.ndarray, imax: Optional[float] = None,
                 dtype: Optional[str] = None) -> "Image3":
        """Build from an array indexed as (x, y, z); 2D input means nz = 1."""
        array = np.asarray(array, dtype=np.float64)
        if array.ndim == 2:
            array = array[:, :, np.newaxis]
        return cls(np.moveaxis(array, 2, 0), imax=imax, dtype=dtype)

    @classmethod
    def zeros(cls, nx: int, ny: int, nz: int) -> "Image3":
        return cls(np.zeros((nz, nx, ny)))

    @property
    def nx(self) -> int:
        return self.planes.shape[1]

    @property
    def ny(self) -> int:
        return self.planes.shape[2]

    @property
    def nz(self) -> int:
        return self.planes.shape[0]

    @property
    def extents(self) -> Tuple[int, int, int]:
        return self.nx, self.ny, self.nz

    @property
    def size(self) -> int:
        return self.planes.size

    def to_xyz(self) -> np.ndarray:
        """View the data indexed as (x, y, z)."""
        return np.moveaxis(self.planes, 0, 2)

    def copy(self) -> "Image3":
        return Image3(self.planes.copy(), imax=self.imax, dtype=self.dtype)

    def norm(self) -> float:
        return norm_3d(self)


@dataclass(eq=False)
class Block3(Image3):
    """A block I_q cut from a parent image, with its origin (ox, oy, oz).

    ``valid`` holds the extents of the part of the block that lies inside
    the unpadded parent; anything beyond is edge-replicated padding.
    """

    origin: Tuple[int, int, int] = (0, 0, 0)
    valid: Optional[Tuple[int, int, int]] = None

    def __post_init__(self):
        super().__post_init__()
        self.origin = tuple(int(o) for o in self.origin)
        if any(o < 0 for o in self.origin):
            raise ValueError(f"Block origin must be non-negative, got {self.origin}")
        if self.valid is None:
            self.valid = self.extents
        self.valid = tuple(int(v) for v in self.valid)

    @property
    def has_padding(self) -> bool:
        return self.valid != self.extents

    def fits_in(self, parent_extents: Tuple[int, int, int]) -> bool:
        return all(o + e <= p for o, e, p in zip(self.origin, self.extents, parent_extents))

    def copy(self) -> "Block3":
        return Block3(self.planes.copy(), imax=self.imax, dtype=self.dtype, origin=self.origin, valid=self.valid)


def _check_vectors(gx: np.ndarray, gy: np.ndarray, gz: np.ndarray, t: Image3):
    lengths = (len(gx), len(gy), len(gz))
    if lengths != t.extents:
        raise DimensionMismatchError("atom factor lengths", lengths, t.extents)


def inner_product_3d(a: Image3, b: Image3) -> float:
    """<a, b>_3D: sum over all (i, j, m) of a(i, j, m) b(i, j, m)."""
    if a.extents != b.extents:
        raise DimensionMismatchError("inner_product_3d", a.extents, b.extents)
    return float(np.vdot(a.planes, b.planes))


def norm_3d(t: Image3) -> float:
    """Frobenius norm ||t||, the square root of <t, t>."""
    return float(np.sqrt(inner_product_3d(t, t)))


def outer_3d(gx: np.ndarray, gy: np.ndarray, gz: np.ndarray) -> Image3:
    """Materialize gx ⊗ gy ⊗ gz. Only used by oracles and OMP3D."""
    gx, gy, gz = (np.asarray(g, dtype=np.float64) for g in (gx, gy, gz))
    return Image3(gz[:, None, None] * np.multiply.outer(gx, gy)[None, :, :])


def separable_inner_product(gx: np.ndarray, gy: np.ndarray, gz: np.ndarray, t: Image3) -> float:
    """<gx ⊗ gy ⊗ gz, t>_3D computed as sum_m <gx, I_m gy> gz(m).

    Only the length-nz vector p(m) = <gx, I_m gy> is formed.
    """
    _check_vectors(gx, gy, gz, t)
    p = (t.planes @ gy) @ gx
    return float(p @ gz)


def rank1_update(t: Image3, gx: np.ndarray, gy: np.ndarray, gz: np.ndarray, alpha: float):
    """In place: t(i, j, s) -= alpha gx(i) gy(j) gz(s), one plane at a time."""
    _check_vectors(gx, gy, gz, t)
    if alpha == 0.0:
        return
    plane = np.multiply.outer(gx, gy)
    for s in range(t.nz):
        weight = alpha * gz[s]
        if weight != 0.0:
            t.planes[s] -= weight * plane
