"""
Decomposition files.

Binary layout (little-endian):

    magic        8 bytes   b"SPMP3D\\0\\0"
    meta_len     u32
    meta         meta_len bytes of UTF-8 JSON
    block_count  u32
    per block    7 x i4    ox, oy, oz, bx, by, bz, k
                 k x (i4 lx, i4 ly, i4 lz, f8 c)   indices 1-based
    trailer      32 bytes  sha256 of everything before it

The JSON form carries the same content for debugging.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

from core.exceptions import ChecksumError, DictionaryMismatchError, FormatError
from core.pursuit import AtomicDecomposition, AtomIndex

logger = logging.getLogger(__name__)

MAGIC = b"SPMP3D\0\0"
FORMAT_VERSION = 1
DIGEST_SIZE = 32

U32 = np.dtype('<u4')
BLOCK_DTYPE = np.dtype([
    ('ox', '<i4'), ('oy', '<i4'), ('oz', '<i4'),
    ('bx', '<i4'), ('by', '<i4'), ('bz', '<i4'),
    ('k', '<i4'),
])
ATOM_DTYPE = np.dtype([('lx', '<i4'), ('ly', '<i4'), ('lz', '<i4'), ('c', '<f8')])


@dataclass
class DecompositionFile:
    """Run metadata plus one decomposition per block, in partition order."""

    metadata: Dict[str, Any]
    decompositions: List[AtomicDecomposition] = field(default_factory=list)

    @property
    def total_atoms(self) -> int:
        return sum(dc.k for dc in self.decompositions)

    def check_dictionary(self, fingerprint: str):
        """Raise DictionaryMismatchError unless ``fingerprint`` is the stored dictionary hash."""
        stored = self.metadata.get('dictionary_sha256')
        if stored != fingerprint:
            raise DictionaryMismatchError(
                f"Decomposition was produced with dictionary {stored}, "
                f"but the configured dictionary hashes to {fingerprint}; "
                f"rebuild it with dictionaries {self.metadata.get('dictionaries')} "
                f"and block {self.metadata.get('partition')}"
            )

    def check_indices(self, counts: Sequence[int], extents: Sequence[int]):
        """Every block must have ``extents`` and every atom index must lie in 1..M per axis.

        The checksum only proves the file is intact; a file written against
        another dictionary size can still pass it.
        """
        counts, extents = tuple(int(c) for c in counts), tuple(int(e) for e in extents)
        for position, dc in enumerate(self.decompositions):
            if dc.extents != extents:
                raise FormatError(f"Block {position} has extents {dc.extents}, expected {extents}")
            if not dc.k:
                continue
            idx = dc.index_array()
            bad = (idx < 1) | (idx > np.array(counts))
            if bad.any():
                row = int(np.flatnonzero(bad.any(axis=1))[0])
                raise FormatError(
                    f"Block {position} at {dc.origin} holds atom {tuple(int(v) for v in idx[row])} "
                    f"outside the dictionary sizes {counts}"
                )


def encode(df: DecompositionFile) -> bytes:
    """Serialize ``df`` to the binary layout above.

    Args:
        df: Metadata and per-block decompositions; ``format_version`` is added when absent

    Returns:
        The file bytes, sha256 trailer included
    """
    meta = dict(df.metadata)
    meta.setdefault('format_version', FORMAT_VERSION)
    meta_bytes = json.dumps(meta, sort_keys=True).encode('utf-8')

    parts = [
        MAGIC,
        np.array([len(meta_bytes)], dtype=U32).tobytes(),
        meta_bytes,
        np.array([len(df.decompositions)], dtype=U32).tobytes(),
    ]
    for dc in df.decompositions:
        header = np.array([(*dc.origin, *dc.extents, dc.k)], dtype=BLOCK_DTYPE)
        parts.append(header.tobytes())
        if dc.k:
            atoms = np.zeros(dc.k, dtype=ATOM_DTYPE)
            idx = dc.index_array()
            atoms['lx'], atoms['ly'], atoms['lz'] = idx[:, 0], idx[:, 1], idx[:, 2]
            atoms['c'] = dc.coefficients
            parts.append(atoms.tobytes())

    body = b''.join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, dtype: np.dtype, count: int = 1) -> np.ndarray:
        size = dtype.itemsize * count
        if self.pos + size > len(self.data):
            raise FormatError(f"Truncated decomposition file at byte {self.pos} (need {size} more)")
        out = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.pos)
        self.pos += size
        return out

    def raw(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise FormatError(f"Truncated decomposition file at byte {self.pos} (need {size} more)")
        out = self.data[self.pos:self.pos + size]
        self.pos += size
        return out


def decode(data: bytes) -> DecompositionFile:
    """Parse bytes produced by encode.

    Args:
        data: Complete file contents

    Returns:
        DecompositionFile with the stored metadata and blocks in file order

    Raises:
        ChecksumError: If the sha256 trailer does not match
        FormatError: On bad magic, an unknown format version, truncation,
            trailing bytes, negative counts or atom indices below 1
    """
    if len(data) < len(MAGIC) + DIGEST_SIZE or not data.startswith(MAGIC):
        raise FormatError("Not a decomposition file (bad magic)")
    body, trailer = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != trailer:
        raise ChecksumError("Decomposition file failed its sha256 check; it was modified or truncated")

    reader = _Reader(body)
    reader.raw(len(MAGIC))
    meta_len = int(reader.take(U32)[0])
    try:
        metadata = json.loads(reader.raw(meta_len).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Malformed decomposition metadata: {e}")
    if metadata.get('format_version', FORMAT_VERSION) != FORMAT_VERSION:
        raise FormatError(f"Unsupported decomposition format version {metadata.get('format_version')}")

    count = int(reader.take(U32)[0])
    decompositions = []
    for _ in range(count):
        header = reader.take(BLOCK_DTYPE)[0]
        k = int(header['k'])
        if k < 0:
            raise FormatError(f"Negative atom count {k} in decomposition file")
        atoms = reader.take(ATOM_DTYPE, k)
        if k and min(atoms['lx'].min(), atoms['ly'].min(), atoms['lz'].min()) < 1:
            raise FormatError("Atom indices in a decomposition file are 1-based; found an index below 1")
        decompositions.append(AtomicDecomposition(
            extents=(int(header['bx']), int(header['by']), int(header['bz'])),
            origin=(int(header['ox']), int(header['oy']), int(header['oz'])),
            coefficients=atoms['c'].tolist(),
            indices=[AtomIndex(int(a['lx']), int(a['ly']), int(a['lz'])) for a in atoms],
        ))
    if reader.pos != len(body):
        raise FormatError(f"{len(body) - reader.pos} unexpected trailing bytes in decomposition file")
    return DecompositionFile(metadata, decompositions)


def write_decomposition(path: Path, df: DecompositionFile):
    """Encode ``df`` to ``path``, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(encode(df))
    logger.info(f"Wrote {len(df.decompositions)} block decompositions ({df.total_atoms} atoms): {path}")


def read_decomposition(path: Path) -> DecompositionFile:
    """Read and decode a decomposition file; FileNotFoundError when it is missing."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Decomposition file not found: {path}")
    return decode(path.read_bytes())


def to_json(df: DecompositionFile) -> Dict[str, Any]:
    """JSON-ready dict; each atom is ``[lx, ly, lz, c]``."""
    return {
        'metadata': df.metadata,
        'blocks': [
            {
                'origin': list(dc.origin),
                'extents': list(dc.extents),
                'atoms': [[*idx, c] for c, idx in dc.entries],
            }
            for dc in df.decompositions
        ],
    }


def from_json(data: Dict[str, Any]) -> DecompositionFile:
    """Inverse of to_json; FormatError on missing or malformed fields."""
    try:
        decompositions = [
            AtomicDecomposition(
                extents=tuple(block['extents']),
                origin=tuple(block['origin']),
                coefficients=[float(a[3]) for a in block['atoms']],
                indices=[AtomIndex(int(a[0]), int(a[1]), int(a[2])) for a in block['atoms']],
            )
            for block in data['blocks']
        ]
        return DecompositionFile(dict(data['metadata']), decompositions)
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise FormatError(f"Malformed decomposition JSON: {e}")
