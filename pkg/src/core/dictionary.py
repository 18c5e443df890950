"""
1D dictionary builders and separable 3D dictionaries.

Builders return unit-norm column atoms. The 3D dictionary D = Dx ⊗ Dy ⊗ Dz
is only ever represented by its three factors.
"""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from core.exceptions import DictionaryError, FormatError

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-12

DICTIONARY_NAMES = ('thin3d', 'mixed-pd', 'mixed-wd', 'dirac', 'cosine', 'sine')


@dataclass(frozen=True, eq=False)
class Dictionary1D:
    """Matrix of unit-norm atoms (one per column) for a single axis."""

    atoms: np.ndarray
    labels: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64, order='F')
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise DictionaryError(f"Dictionary atoms must be a non-empty matrix, got {atoms.shape}")
        if len(self.labels) != atoms.shape[1]:
            raise DictionaryError(
                f"Got {len(self.labels)} labels for {atoms.shape[1]} atoms"
            )
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(norms == 0.0):
            raise DictionaryError("Dictionary contains an all-zero atom")
        if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
            raise DictionaryError("Dictionary atoms must have unit Euclidean norm")
        atoms.setflags(write=False)
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'labels', tuple((str(n), int(i)) for n, i in self.labels))

    @property
    def n(self) -> int:
        """Signal length (rows)."""
        return self.atoms.shape[0]

    @property
    def m(self) -> int:
        """Number of atoms (columns)."""
        return self.atoms.shape[1]

    @property
    def redundancy(self) -> float:
        return self.m / self.n

    def fingerprint(self) -> str:
        """sha256 hex digest of the shape and the float64 little-endian atoms."""
        digest = hashlib.sha256()
        digest.update(np.array(self.atoms.shape, dtype='<i8').tobytes())
        digest.update(np.ascontiguousarray(self.atoms.T, dtype='<f8').tobytes())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class SeparableDictionary3:
    """D = Dx ⊗ Dy ⊗ Dz, kept as its three 1D factors."""

    dx: Dictionary1D
    dy: Dictionary1D
    dz: Dictionary1D

    @property
    def extents(self) -> Tuple[int, int, int]:
        return self.dx.n, self.dy.n, self.dz.n

    @property
    def counts(self) -> Tuple[int, int, int]:
        return self.dx.m, self.dy.m, self.dz.m

    @property
    def size(self) -> int:
        """Implied number of 3D atoms M = Mx My Mz."""
        mx, my, mz = self.counts
        return mx * my * mz

    @property
    def redundancies(self) -> Tuple[float, float, float]:
        return self.dx.redundancy, self.dy.redundancy, self.dz.redundancy

    @property
    def redundancy(self) -> float:
        nx, ny, nz = self.extents
        return self.size / (nx * ny * nz)

    def fingerprint(self) -> str:
        """Digest over the three factor fingerprints; stored in decomposition files."""
        digest = hashlib.sha256()
        for factor in (self.dx, self.dy, self.dz):
            digest.update(factor.fingerprint().encode('ascii'))
        return digest.hexdigest()


def _normalized(columns: np.ndarray, labels: List[Tuple[str, int]]) -> Dictionary1D:
    norms = np.linalg.norm(columns, axis=0)
    keep = norms > 0.0
    if not np.all(keep):
        columns = columns[:, keep]
        labels = [label for label, k in zip(labels, keep) if k]
        norms = norms[keep]
    return Dictionary1D(columns / norms, tuple(labels))


def _check_counts(n: int, m: int):
    if n < 1 or m < 1:
        raise DictionaryError(f"Dictionary extent and atom count must be positive, got n={n}, m={m}")


def build_cosine(n: int, m: int = None) -> Dictionary1D:
    """D_C: atoms cos(pi (2i-1)(k-1) / 2m), i = 1..n, k = 1..m."""
    m = 2 * n if m is None else m
    _check_counts(n, m)
    i = np.arange(1, n + 1)[:, None]
    k = np.arange(1, m + 1)[None, :]
    columns = np.cos(np.pi * (2 * i - 1) * (k - 1) / (2 * m))
    return _normalized(columns, [('cosine', int(j)) for j in range(1, m + 1)])


def build_sine(n: int, m: int = None) -> Dictionary1D:
    """D_S: atoms sin(pi (2i-1) k / 2m), i = 1..n, k = 1..m."""
    m = 2 * n if m is None else m
    _check_counts(n, m)
    i = np.arange(1, n + 1)[:, None]
    k = np.arange(1, m + 1)[None, :]
    columns = np.sin(np.pi * (2 * i - 1) * k / (2 * m))
    return _normalized(columns, [('sine', int(j)) for j in range(1, m + 1)])


def _hat_samples(m: int) -> np.ndarray:
    """Linear B-spline of support [0, 2m) sampled at x = 0..2m-1."""
    x = np.arange(0, 2 * m, dtype=np.float64)
    return np.where(x < m, x / m, 2.0 - x / m)


def build_spline_prototypes(n: int) -> List[np.ndarray]:
    """Prototypes h1..h7 as length-n vectors (unnormalized).

    h1..h4 are hat functions of half-width m = 1..4 sampled at x = 1..2m-1.
    h5..h7 are the derivatives of h2..h4 on the same grid, taken as the
    backward difference h(x) - h(x-1): +1/m for x <= m, -1/m above.
    """
    if n < 8:
        raise DictionaryError(f"Spline prototypes need n >= 8, got {n}")
    prototypes = []
    for m in range(1, 5):
        prototypes.append(_hat_samples(m)[1:])
    for m in range(2, 5):
        prototypes.append(np.diff(_hat_samples(m)))
    return [_pad(p, n) for p in prototypes]


def build_wavelet_prototypes(n: int) -> List[np.ndarray]:
    """Prototypes p1..p7 for the wavelet domain, as length-n vectors."""
    if n < 3:
        raise DictionaryError(f"Wavelet-domain prototypes need n >= 3, got {n}")
    h5 = np.diff(_hat_samples(2))
    prototypes = [
        np.array([1.0]),
        np.array([1.0, 1.0]),
        h5,
        np.array([1.0, 1.0, 1.0]),
        np.array([-1.0, 1.0, 1.0]),
        np.array([1.0, -1.0, 1.0]),
        np.array([-1.0, -1.0, 1.0]),
    ]
    return [_pad(p, n) for p in prototypes]


def _pad(prototype: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(max(n, len(prototype)))
    out[:len(prototype)] = prototype
    return out


def translate_prototype(proto: Sequence[float], n: int, name: str = 'proto') -> Dictionary1D:
    """Shift ``proto`` so its first sample sits at t = 1..n, restricted to length n."""
    proto = np.trim_zeros(np.asarray(proto, dtype=np.float64), 'b')
    if proto.size == 0:
        raise DictionaryError("Prototype is all zeros")
    if n < 1:
        raise DictionaryError(f"Dictionary extent must be positive, got {n}")
    columns = np.zeros((n, n))
    for t in range(n):
        width = min(proto.size, n - t)
        columns[t:t + width, t] = proto[:width]
    return _normalized(columns, [(name, t) for t in range(1, n + 1)])


def build_dirac(n: int) -> Dictionary1D:
    """Standard Euclidean basis (translates of p1 = h1)."""
    return translate_prototype([1.0], n, name='dirac')


def union(*dictionaries: Dictionary1D) -> Dictionary1D:
    """Multiset union: columns concatenated in order, duplicates retained."""
    extents = {d.n for d in dictionaries}
    if len(extents) != 1:
        raise DictionaryError(f"Cannot join dictionaries of different extents {sorted(extents)}")
    atoms = np.hstack([d.atoms for d in dictionaries])
    labels = tuple(label for d in dictionaries for label in d.labels)
    return Dictionary1D(atoms, labels)


def build_mixed_1d(n: int, domain: str) -> Dictionary1D:
    """D_pd = D_C ∪ D_S ∪ D_Lp or D_wd = D_C ∪ D_S ∪ D_Lw, 11n atoms."""
    if domain == 'pd':
        prototypes, prefix = build_spline_prototypes(n), 'h'
    elif domain == 'wd':
        prototypes, prefix = build_wavelet_prototypes(n), 'p'
    else:
        raise DictionaryError(f"Unknown domain '{domain}', expected 'pd' or 'wd'")
    parts = [build_cosine(n, 2 * n), build_sine(n, 2 * n)]
    parts += [
        translate_prototype(p, n, name=f"{prefix}{j}")
        for j, p in enumerate(prototypes, start=1)
    ]
    return union(*parts)


def build_thin_3d(n: int) -> Dictionary1D:
    """D̃_pd = D_C ∪ D_S ∪ D_P1, 5n atoms."""
    if n < 1:
        raise DictionaryError(f"Dictionary extent must be positive, got {n}")
    return union(build_cosine(n, 2 * n), build_sine(n, 2 * n), build_dirac(n))


def build_named(name: str, n: int) -> Dictionary1D:
    """Build one of DICTIONARY_NAMES for extent n."""
    builders = {
        'thin3d': build_thin_3d,
        'mixed-pd': lambda size: build_mixed_1d(size, 'pd'),
        'mixed-wd': lambda size: build_mixed_1d(size, 'wd'),
        'dirac': build_dirac,
        'cosine': build_cosine,
        'sine': build_sine,
    }
    if name not in builders:
        raise DictionaryError(f"Unknown dictionary '{name}', expected one of {', '.join(DICTIONARY_NAMES)}")
    return builders[name](n)


def assemble(dx: Dictionary1D, dy: Dictionary1D, dz: Dictionary1D) -> SeparableDictionary3:
    """Record the factor triple of D = Dx ⊗ Dy ⊗ Dz."""
    d = SeparableDictionary3(dx, dy, dz)
    logger.debug(
        f"Separable dictionary {d.extents} with {d.counts} atoms per axis, "
        f"M={d.size}, redundancy {d.redundancy:g}"
    )
    return d


def build_separable(names: Sequence[str], extents: Sequence[int]) -> SeparableDictionary3:
    """Build and assemble per-axis named dictionaries for the given block extents."""
    return assemble(*(build_named(name, n) for name, n in zip(names, extents)))


def save_dictionary(d: Dictionary1D, path: Path):
    """Text format: header ``n m`` then one atom (column) per line."""
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"{d.n} {d.m}\n")
        np.savetxt(f, d.atoms.T, fmt='%.17g')
    logger.info(f"Saved dictionary {d.n}x{d.m}: {path}")


def load_dictionary(path: Path) -> Dictionary1D:
    """Read a dictionary written by save_dictionary.

    Args:
        path: Text file with an ``n m`` header and m lines of n samples

    Returns:
        Dictionary1D labelled ``(file stem, j)`` for j = 1..m

    Raises:
        FormatError: If the header is not two integers or disagrees with the body
        DictionaryError: If an atom is not unit norm
    """
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline().split()
        try:
            n, m = (int(v) for v in header)
        except ValueError:
            raise FormatError(f"Bad dictionary header in {path}: {header}")
        values = np.loadtxt(f, ndmin=2)
    if values.shape != (m, n):
        raise FormatError(f"Dictionary {path} declares {n}x{m} but holds {values.shape[1]}x{values.shape[0]}")
    return Dictionary1D(values.T, tuple((path.stem, j) for j in range(1, m + 1)))
