"""
Image file I/O.

Netpbm (P5/P6, maxval 255 or 65535, 16-bit samples big-endian) and raw
band-sequential cubes with a JSON sidecar are read and written with numpy so
the byte layout is exact. PNG goes through Pillow.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from core.exceptions import FormatError
from core.tensor import Image3

logger = logging.getLogger(__name__)

CUBE_DTYPES = {
    'u8': np.dtype('<u1'),
    'u16': np.dtype('<u2'),
    'f32': np.dtype('<f4'),
}
DTYPE_IMAX = {'u8': 255.0, 'u16': 65535.0}

FORMAT_SUFFIXES = {
    '.pgm': 'pgm',
    '.ppm': 'ppm',
    '.pnm': 'pnm',
    '.cube': 'cube',
    '.bsq': 'cube',
    '.raw': 'cube',
    '.png': 'png',
}


def detect_format(path: Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix not in FORMAT_SUFFIXES:
        raise FormatError(f"Cannot infer image format from '{path}'; use one of {sorted(FORMAT_SUFFIXES)}")
    return FORMAT_SUFFIXES[suffix]


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.json')


def load_image(path: Path, fmt: Optional[str] = None, imax: Optional[float] = None) -> Image3:
    """Load ``path`` as an Image3; ``imax`` overrides the dtype-derived range."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Image not found: {path}")
    fmt = fmt or detect_format(path)
    if fmt in ('pgm', 'ppm', 'pnm'):
        img = _load_netpbm(path)
    elif fmt == 'cube':
        img = _load_cube(path)
    elif fmt == 'png':
        img = _load_png(path)
    else:
        raise FormatError(f"Unsupported image format '{fmt}'")

    if imax is not None:
        img.imax = float(imax)
    logger.debug(f"Loaded {path}: extents {img.extents}, dtype {img.dtype}, imax {img.imax}")
    return img


def save_image(img: Image3, path: Path, fmt: Optional[str] = None, dtype: Optional[str] = None):
    """Write ``img``; integer formats round and clip to the dtype range."""
    path = Path(path)
    fmt = fmt or detect_format(path)
    dtype = dtype or img.dtype or 'u8'
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt in ('pgm', 'ppm', 'pnm'):
        _save_netpbm(img, path, fmt, dtype)
    elif fmt == 'cube':
        _save_cube(img, path, dtype)
    elif fmt == 'png':
        _save_png(img, path, dtype)
    else:
        raise FormatError(f"Unsupported image format '{fmt}'")
    logger.debug(f"Saved {img.extents} image as {fmt}/{dtype}: {path}")


def quantize(planes: np.ndarray, dtype: str) -> np.ndarray:
    """Round and clip real samples to an integer dtype; f32 is a plain cast."""
    if dtype == 'f32':
        return planes.astype(np.float32)
    if dtype not in DTYPE_IMAX:
        raise FormatError(f"Unknown sample type '{dtype}', expected u8, u16 or f32")
    return np.clip(np.rint(planes), 0, DTYPE_IMAX[dtype]).astype(CUBE_DTYPES[dtype])


def _read_header(data: bytes) -> Tuple[bytes, int, int, int, int]:
    """Parse a binary Netpbm header; returns magic, width, height, maxval and payload offset."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("Truncated Netpbm header")
        if data[pos:pos + 1] == b'#':
            end = data.find(b'\n', pos)
            if end < 0:
                raise FormatError("Truncated Netpbm header")
            pos = end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b'#':
            pos += 1
        tokens.append(data[start:pos])
    # Exactly one whitespace byte separates maxval from the raster.
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("Malformed Netpbm header: missing separator before pixel data")
    magic = tokens[0]
    if magic not in (b'P5', b'P6'):
        raise FormatError(f"Unsupported Netpbm magic {magic!r}; only binary P5/P6 are read")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"Malformed Netpbm header fields {tokens[1:]}")
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"Invalid Netpbm geometry {width}x{height} maxval {maxval}")
    return magic, width, height, maxval, pos + 1


def _load_netpbm(path: Path) -> Image3:
    data = path.read_bytes()
    magic, width, height, maxval, offset = _read_header(data)
    channels = 3 if magic == b'P6' else 1
    sample = np.dtype('>u2') if maxval > 255 else np.dtype('u1')
    count = width * height * channels
    if len(data) - offset < count * sample.itemsize:
        raise FormatError(
            f"Truncated pixel data in {path}: need {count * sample.itemsize} bytes, "
            f"found {len(data) - offset}"
        )
    raster = np.frombuffer(data, dtype=sample, count=count, offset=offset)
    # Netpbm rows run along x and columns along y.
    array = raster.reshape(height, width, channels)
    dtype = 'u16' if maxval > 255 else 'u8'
    return Image3.from_xyz(array, imax=float(maxval), dtype=dtype)


def _save_netpbm(img: Image3, path: Path, fmt: str, dtype: str):
    if fmt == 'pnm':
        fmt = 'ppm' if img.nz == 3 else 'pgm'
    channels = 3 if fmt == 'ppm' else 1
    if img.nz != channels:
        raise FormatError(f"{fmt.upper()} needs {channels} channel(s), image has {img.nz}")
    if dtype not in DTYPE_IMAX:
        raise FormatError(f"Netpbm files hold u8 or u16 samples, not '{dtype}'")
    samples = quantize(img.to_xyz(), dtype)
    if dtype == 'u16':
        samples = samples.astype('>u2')
    magic = 'P6' if channels == 3 else 'P5'
    header = f"{magic}\n{img.ny} {img.nx}\n{int(DTYPE_IMAX[dtype])}\n".encode('ascii')
    with open(path, 'wb') as f:
        f.write(header)
        f.write(np.ascontiguousarray(samples).tobytes())


def _load_cube(path: Path) -> Image3:
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise FormatError(f"Cube {path} has no sidecar {meta_path.name}")
    try:
        with open(meta_path, 'r', encoding='utf-8') as f:
            meta = json.load(f)
        nx, ny, nz = int(meta['nx']), int(meta['ny']), int(meta['nz'])
        dtype = meta['dtype']
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"Malformed cube sidecar {meta_path}: {e}")
    if dtype not in CUBE_DTYPES:
        raise FormatError(f"Cube sidecar declares unknown dtype '{dtype}'")
    if min(nx, ny, nz) < 1:
        raise FormatError(f"Cube sidecar declares invalid extents {(nx, ny, nz)}")

    payload = path.read_bytes()
    expected = nx * ny * nz * CUBE_DTYPES[dtype].itemsize
    if len(payload) != expected:
        raise FormatError(f"Cube {path} holds {len(payload)} bytes, sidecar implies {expected}")
    planes = np.frombuffer(payload, dtype=CUBE_DTYPES[dtype]).reshape(nz, nx, ny)
    imax = meta.get('imax', DTYPE_IMAX.get(dtype))
    if imax is None:
        imax = float(planes.max()) if planes.size else None
    return Image3(planes, imax=float(imax) if imax else None, dtype=dtype)


def _save_cube(img: Image3, path: Path, dtype: str):
    if dtype not in CUBE_DTYPES:
        raise FormatError(f"Cube dtype must be one of {sorted(CUBE_DTYPES)}, got '{dtype}'")
    samples = quantize(img.planes, dtype).astype(CUBE_DTYPES[dtype])
    with open(path, 'wb') as f:
        f.write(samples.tobytes())
    meta = {'nx': img.nx, 'ny': img.ny, 'nz': img.nz, 'dtype': dtype}
    if dtype == 'f32' and img.imax is not None:
        meta['imax'] = img.imax
    with open(sidecar_path(path), 'w', encoding='utf-8') as f:
        json.dump(meta, f, indent=2)


def _load_png(path: Path) -> Image3:
    with Image.open(path) as im:
        if im.mode in ('I;16', 'I;16B', 'I'):
            array = np.asarray(im, dtype=np.uint16)
            dtype = 'u16'
        else:
            if im.mode not in ('L', 'RGB'):
                im = im.convert('RGB')
            array = np.asarray(im, dtype=np.uint8)
            dtype = 'u8'
    return Image3.from_xyz(array, imax=DTYPE_IMAX[dtype], dtype=dtype)


def _save_png(img: Image3, path: Path, dtype: str):
    samples = quantize(img.to_xyz(), 'u16' if dtype == 'u16' else 'u8')
    if img.nz == 1:
        plane = samples[:, :, 0]
        im = Image.fromarray(plane.astype(np.uint16), mode='I;16') if dtype == 'u16' else Image.fromarray(plane, mode='L')
    elif img.nz == 3 and dtype != 'u16':
        im = Image.fromarray(samples, mode='RGB')
    else:
        raise FormatError(f"PNG output supports 1-channel or 3-channel u8 images, got nz={img.nz}, {dtype}")
    im.save(path)
