"""
Block partitioning of 3D images and reassembly of approximated blocks.
"""

import logging
import re
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.dictionary import SeparableDictionary3
from core.exceptions import ConfigError, DimensionMismatchError
from core.pursuit import AtomicDecomposition
from core.tensor import Block3, Image3

logger = logging.getLogger(__name__)

_PARTITION_RE = re.compile(r'^\s*(\d+)\s*[xX]\s*(\d+)\s*(?:[xX]\s*(\d+))?\s*$')


@dataclass(frozen=True)
class PartitionSpec:
    """Block extents (bx, by, bz) and how the image is padded to fit them."""

    bx: int
    by: int
    bz: int = 1
    padding: str = 'edge'

    def __post_init__(self):
        if min(self.bx, self.by, self.bz) < 1:
            raise ConfigError(f"Block extents must be positive, got {self.extents}")
        if self.padding not in ('edge',):
            raise ConfigError(f"Unknown padding policy '{self.padding}'")

    @classmethod
    def parse(cls, text: str) -> "PartitionSpec":
        """``"8x8x3"`` -> (8, 8, 3); ``"8x8"`` means bz = 1."""
        match = _PARTITION_RE.match(str(text))
        if not match:
            raise ConfigError(f"Cannot parse block size '{text}', expected e.g. 8x8x3")
        bx, by, bz = match.groups()
        return cls(int(bx), int(by), int(bz) if bz else 1)

    @property
    def extents(self) -> Tuple[int, int, int]:
        return self.bx, self.by, self.bz

    @property
    def points(self) -> int:
        return self.bx * self.by * self.bz

    def __str__(self) -> str:
        return f"{self.bx}x{self.by}x{self.bz}"


def padded_extents(extents: Sequence[int], spec: PartitionSpec,
                   multiples: Optional[Sequence[int]] = None) -> Tuple[int, int, int]:
    """Smallest extents >= ``extents`` divisible by the block size (and ``multiples`` when given)."""
    steps = list(spec.extents)
    if multiples is not None:
        steps = [int(np.lcm(s, m)) for s, m in zip(steps, multiples)]
    return tuple(-(-int(e) // s) * s for e, s in zip(extents, steps))


def block_grid(extents: Sequence[int], spec: PartitionSpec) -> Tuple[int, int, int]:
    """Number of blocks (Qx, Qy, Qz) along each axis after padding."""
    return tuple(-(-int(e) // b) for e, b in zip(extents, spec.extents))


def pad_image(img: Image3, target: Sequence[int]) -> Image3:
    """Edge-replicate ``img`` up to ``target`` extents (x, y, z)."""
    tx, ty, tz = (int(t) for t in target)
    if (tx, ty, tz) == img.extents:
        return img
    if tx < img.nx or ty < img.ny or tz < img.nz:
        raise DimensionMismatchError("pad target smaller than image", (tx, ty, tz), img.extents)
    widths = ((0, tz - img.nz), (0, tx - img.nx), (0, ty - img.ny))
    return Image3(np.pad(img.planes, widths, mode='edge'), imax=img.imax, dtype=img.dtype)


def crop_image(img: Image3, extents: Sequence[int]) -> Image3:
    """Copy of the leading (nx, ny, nz) corner of ``img``; undoes pad_image."""
    nx, ny, nz = (int(e) for e in extents)
    return Image3(img.planes[:nz, :nx, :ny].copy(), imax=img.imax, dtype=img.dtype)


def partition(img: Image3, spec: PartitionSpec, padded: Optional[Sequence[int]] = None) -> List[Block3]:
    """Tile the image into non-overlapping blocks.

    Blocks come out z-major, then x, then y. Each block records how much of
    it lies inside the unpadded image in ``valid``.
    """
    target = tuple(padded) if padded is not None else padded_extents(img.extents, spec)
    if any(t % b for t, b in zip(target, spec.extents)):
        raise DimensionMismatchError("padded extents vs block size", target, spec.extents)
    source = pad_image(img, target)
    bx, by, bz = spec.extents

    blocks = []
    for oz in range(0, target[2], bz):
        for ox in range(0, target[0], bx):
            for oy in range(0, target[1], by):
                valid = (
                    max(0, min(bx, img.nx - ox)),
                    max(0, min(by, img.ny - oy)),
                    max(0, min(bz, img.nz - oz)),
                )
                blocks.append(Block3(
                    source.planes[oz:oz + bz, ox:ox + bx, oy:oy + by].copy(),
                    imax=img.imax,
                    origin=(ox, oy, oz),
                    valid=valid,
                ))

    padded_count = sum(1 for b in blocks if b.has_padding)
    logger.debug(
        f"Partitioned {img.extents} into {len(blocks)} blocks of {spec} "
        f"(padded to {target}, {padded_count} blocks touch padding)"
    )
    return blocks


def _place(canvas: np.ndarray, coverage: np.ndarray, planes: np.ndarray, origin: Tuple[int, int, int]):
    ox, oy, oz = origin
    nz, nx, ny = planes.shape
    if oz + nz > canvas.shape[0] or ox + nx > canvas.shape[1] or oy + ny > canvas.shape[2]:
        raise DimensionMismatchError(
            "block outside target", (ox + nx, oy + ny, oz + nz),
            (canvas.shape[1], canvas.shape[2], canvas.shape[0]),
        )
    canvas[oz:oz + nz, ox:ox + nx, oy:oy + ny] = planes
    coverage[oz:oz + nz, ox:ox + nx, oy:oy + ny] += 1


def _finish(canvas: np.ndarray, coverage: np.ndarray, extents: Sequence[int]) -> Image3:
    if np.any(coverage > 1):
        raise ValueError("Blocks overlap; cannot assemble")
    if np.any(coverage == 0):
        raise ValueError(f"Blocks leave {int(np.sum(coverage == 0))} points of the target uncovered")
    return crop_image(Image3(canvas), extents)


def assemble_blocks(blocks: Iterable[Block3], extents: Sequence[int],
                    padded: Sequence[int]) -> Image3:
    """Write blocks back at their origins and crop to ``extents``."""
    px, py, pz = padded
    canvas = np.zeros((pz, px, py))
    coverage = np.zeros(canvas.shape, dtype=np.int32)
    for block in blocks:
        _place(canvas, coverage, block.planes, block.origin)
    return _finish(canvas, coverage, extents)


def assemble(decompositions: Iterable[AtomicDecomposition], d: SeparableDictionary3,
             extents: Sequence[int], padded: Optional[Sequence[int]] = None) -> Image3:
    """Reconstruct each block from its decomposition and tile the approximation."""
    decompositions = list(decompositions)
    if padded is None:
        padded = (
            max(dc.origin[0] + dc.extents[0] for dc in decompositions),
            max(dc.origin[1] + dc.extents[1] for dc in decompositions),
            max(dc.origin[2] + dc.extents[2] for dc in decompositions),
        ) if decompositions else tuple(extents)
    px, py, pz = padded
    canvas = np.zeros((pz, px, py))
    coverage = np.zeros(canvas.shape, dtype=np.int32)
    for decomp in decompositions:
        _place(canvas, coverage, decomp.reconstruct(d).planes, decomp.origin)
    return _finish(canvas, coverage, extents)
