"""
Greedy pursuit engines over separable 3D dictionaries.

``select_atom`` scans the dictionary one z-atom at a time and keeps a single
Mx x My correlation plane in memory. ``spmp3d`` alternates that selection
with a self-projection loop restricted to the atoms already chosen, which
gives OMP-equivalent coefficients without storing biorthogonal arrays.
``omp3d`` is the dense reference used to check it.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core.dictionary import SeparableDictionary3
from core.exceptions import ConfigError, DimensionMismatchError
from core.tensor import Image3, norm_3d, rank1_update

logger = logging.getLogger(__name__)

# Candidates within this relative distance of the maximum count as ties;
# the first one in scan order wins.
TIE_RTOL = 1e-12

# OMP3D rejects an atom whose orthogonal complement has a smaller norm.
DEPENDENT_ATOM_TOL = 1e-12

DEFAULT_RELATIVE_EPSILON = 1e-8
DEFAULT_MAX_J = 1000
SHARED_MEMORY_BUDGET = 48 * 1024


class AtomIndex(NamedTuple):
    """1-based indices of an atom in dx, dy and dz."""

    lx: int
    ly: int
    lz: int


@dataclass
class AtomicDecomposition:
    """Coefficients and atom triples approximating one block.

    ``residual_history[0]`` is the norm of the block itself and entry i the
    residual norm after outer iteration i. ``projection_sweeps`` holds the
    sweep count J of every self-projection that ran.
    """

    extents: Tuple[int, int, int]
    origin: Tuple[int, int, int] = (0, 0, 0)
    coefficients: List[float] = field(default_factory=list)
    indices: List[AtomIndex] = field(default_factory=list)
    residual_norm: float = 0.0
    residual_history: List[float] = field(default_factory=list)
    projection_sweeps: List[int] = field(default_factory=list)
    reached_target: bool = True
    _positions: Dict[AtomIndex, int] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.extents = tuple(int(e) for e in self.extents)
        self.origin = tuple(int(o) for o in self.origin)
        self.indices = [AtomIndex(*idx) for idx in self.indices]
        self.coefficients = [float(c) for c in self.coefficients]
        if len(self.indices) != len(self.coefficients):
            raise ValueError(
                f"Decomposition has {len(self.indices)} indices but {len(self.coefficients)} coefficients"
            )
        for position, idx in enumerate(self.indices):
            if idx in self._positions:
                raise ValueError(f"Duplicate atom triple {tuple(idx)} in decomposition")
            self._positions[idx] = position

    @property
    def k(self) -> int:
        return len(self.indices)

    @property
    def entries(self) -> List[Tuple[float, AtomIndex]]:
        return list(zip(self.coefficients, self.indices))

    def position(self, idx: AtomIndex) -> Optional[int]:
        """0-based position of ``idx`` or None when it was never selected."""
        return self._positions.get(AtomIndex(*idx))

    def add(self, idx: AtomIndex, coefficient: float) -> bool:
        """Append a new atom or accumulate into an existing one.

        Returns True when ``idx`` was new.
        """
        idx = AtomIndex(*idx)
        position = self._positions.get(idx)
        if position is not None:
            self.coefficients[position] += float(coefficient)
            return False
        self._positions[idx] = len(self.indices)
        self.indices.append(idx)
        self.coefficients.append(float(coefficient))
        return True

    def index_array(self) -> np.ndarray:
        """(k, 3) int array of 1-based indices."""
        return np.array(self.indices, dtype=np.int64).reshape(-1, 3)

    def reconstruct(self, d: SeparableDictionary3) -> Image3:
        """Σ c(n) dx ⊗ dy ⊗ dz over the stored atoms."""
        _check_conformance(self.extents, d)
        out = Image3.zeros(*self.extents)
        for c, idx in zip(self.coefficients, self.indices):
            gx, gy, gz = _factors(d, idx)
            rank1_update(out, gx, gy, gz, -c)
        return out


@dataclass(frozen=True)
class PursuitConfig:
    """Stopping and tolerance parameters shared by every engine.

    ``epsilon`` of None means DEFAULT_RELATIVE_EPSILON times the block norm.
    ``max_atoms`` of None means the number of points in the block.
    """

    rho: float = 0.0
    epsilon: Optional[float] = None
    max_atoms: Optional[int] = None
    max_j: int = DEFAULT_MAX_J
    projection_period: int = 1

    def __post_init__(self):
        if not (self.rho >= 0.0) or math.isinf(self.rho):
            raise ConfigError(f"rho must be a finite value >= 0, got {self.rho}")
        if self.epsilon is not None and not (self.epsilon > 0.0):
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_atoms is not None and self.max_atoms < 1:
            raise ConfigError(f"max_atoms must be >= 1, got {self.max_atoms}")
        if self.max_j < 1:
            raise ConfigError(f"max_j must be >= 1, got {self.max_j}")
        if self.projection_period < 1:
            raise ConfigError(f"projection_period must be >= 1, got {self.projection_period}")

    def resolve_epsilon(self, block_norm: float) -> float:
        if self.epsilon is not None:
            return self.epsilon
        # All-zero blocks never reach a projection; any positive value works.
        return DEFAULT_RELATIVE_EPSILON * block_norm if block_norm > 0.0 else DEFAULT_RELATIVE_EPSILON

    def resolve_max_atoms(self, block: Image3) -> int:
        return self.max_atoms if self.max_atoms is not None else block.size


class ProjectionResult(NamedTuple):
    residual: Image3
    decomposition: AtomicDecomposition
    sweeps: int
    converged: bool


@dataclass(frozen=True)
class MemoryFootprint:
    """Itemized working-set bytes of one SPMP3D block worker."""

    block_arrays: int
    dictionaries: int
    selection_scratch: int
    coefficients: int
    indices: int
    budget: int = SHARED_MEMORY_BUDGET

    @property
    def real_subtotal(self) -> int:
        return self.block_arrays + self.dictionaries + self.selection_scratch + self.coefficients

    @property
    def total(self) -> int:
        return self.real_subtotal + self.indices

    @property
    def fits(self) -> bool:
        return self.total <= self.budget

    def items(self) -> List[Tuple[str, int]]:
        return [
            ('block + residual', self.block_arrays),
            ('dictionaries', self.dictionaries),
            ('selection scratch', self.selection_scratch),
            ('coefficients', self.coefficients),
            ('indices', self.indices),
            ('real subtotal', self.real_subtotal),
            ('total', self.total),
        ]


def _check_conformance(extents: Tuple[int, int, int], d: SeparableDictionary3):
    if tuple(extents) != d.extents:
        raise DimensionMismatchError("block vs dictionary extents", extents, d.extents)


def _factors(d: SeparableDictionary3, idx: AtomIndex) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    lx, ly, lz = idx
    return d.dx.atoms[:, lx - 1], d.dy.atoms[:, ly - 1], d.dz.atoms[:, lz - 1]


def _first_max(values: np.ndarray) -> int:
    """Position of the first entry of ``values`` (>= 0) within TIE_RTOL of the maximum."""
    best = values.max()
    return int(np.flatnonzero(values >= best - TIE_RTOL * best)[0])


def _correlation_plane(r: Image3, dx: np.ndarray, dy: np.ndarray, gz: np.ndarray) -> np.ndarray:
    """q = Dx^T (Σ_s gz(s) R(:, :, s)) Dy, one Mx x My matrix."""
    rm = np.zeros(r.planes.shape[1:])
    for s in range(r.nz):
        if gz[s] != 0.0:
            rm += gz[s] * r.planes[s]
    return dx.T @ rm @ dy


def select_atom(r: Image3, d: SeparableDictionary3) -> Tuple[float, AtomIndex]:
    """Triple maximizing |<dx ⊗ dy ⊗ dz, r>| and its signed correlation.

    Ties go to the smallest (lz, lx, ly). An all-zero residual yields
    alpha = 0 at (1, 1, 1).
    """
    _check_conformance(r.extents, d)
    dx, dy, dz = d.dx.atoms, d.dy.atoms, d.dz.atoms
    plane_max = np.empty(d.dz.m)
    for m in range(d.dz.m):
        plane_max[m] = np.abs(_correlation_plane(r, dx, dy, dz[:, m])).max()

    if plane_max.max() == 0.0:
        return 0.0, AtomIndex(1, 1, 1)

    m = _first_max(plane_max)
    q = _correlation_plane(r, dx, dy, dz[:, m])
    best = plane_max.max()
    flat = np.abs(q).ravel()
    p = int(np.flatnonzero(flat >= best - TIE_RTOL * best)[0])
    lx, ly = divmod(p, d.dy.m)
    return float(q[lx, ly]), AtomIndex(lx + 1, ly + 1, m + 1)


def sel_trip(r: Image3, d: SeparableDictionary3,
             selected: Sequence[AtomIndex]) -> Tuple[float, int]:
    """Largest |<atom_n, r>| over the already-selected triples.

    Returns the signed value and its 1-based position n (first on ties).
    """
    if len(selected) == 0:
        raise ValueError("sel_trip needs at least one selected atom")
    _check_conformance(r.extents, d)
    idx = np.asarray(selected, dtype=np.int64).reshape(-1, 3) - 1
    gx = d.dx.atoms[:, idx[:, 0]]
    gy = d.dy.atoms[:, idx[:, 1]]
    gz = d.dz.atoms[:, idx[:, 2]]

    alpha = np.zeros(len(idx))
    for s in range(r.nz):
        alpha += np.einsum('ik,ik->k', gx, r.planes[s] @ gy) * gz[s]

    n = _first_max(np.abs(alpha))
    return float(alpha[n]), n + 1


def self_project(r: Image3, decomp: AtomicDecomposition, d: SeparableDictionary3,
                 epsilon: float, max_j: int = DEFAULT_MAX_J) -> ProjectionResult:
    """Run MP restricted to the selected atoms until r has no component in their span.

    ``r`` and ``decomp`` are updated in place. ``converged`` is False when
    ``max_j`` sweeps ran out before every |<atom_n, r>| fell below epsilon.
    """
    if decomp.k == 0:
        return ProjectionResult(r, decomp, 0, True)

    sweeps = 0
    converged = False
    while sweeps < max_j:
        sweeps += 1
        alpha, n = sel_trip(r, d, decomp.indices)
        if abs(alpha) < epsilon:
            converged = True
            break
        decomp.coefficients[n - 1] += alpha
        gx, gy, gz = _factors(d, decomp.indices[n - 1])
        rank1_update(r, gx, gy, gz, alpha)

    if not converged:
        logger.debug(f"Self-projection stopped after max_j={max_j} sweeps above tolerance {epsilon:g}")
    return ProjectionResult(r, decomp, sweeps, converged)


def _start(block: Image3, d: SeparableDictionary3) -> Tuple[Image3, AtomicDecomposition, float]:
    _check_conformance(block.extents, d)
    origin = getattr(block, 'origin', (0, 0, 0))
    residual = Image3(block.planes.copy())
    decomp = AtomicDecomposition(extents=block.extents, origin=origin)
    norm = norm_3d(residual)
    decomp.residual_history.append(norm)
    return residual, decomp, norm


def _finish(decomp: AtomicDecomposition, norm: float, rho: float, engine: str) -> AtomicDecomposition:
    decomp.residual_norm = norm
    decomp.reached_target = norm < rho or norm == 0.0
    logger.debug(
        f"{engine} block at {decomp.origin}: k={decomp.k}, residual {norm:.6g}, "
        f"target {'met' if decomp.reached_target else 'missed'}"
    )
    return decomp


def mp3d(block: Image3, d: SeparableDictionary3, cfg: PursuitConfig) -> AtomicDecomposition:
    """Plain matching pursuit: c(k) is the correlation at selection time."""
    r, decomp, norm = _start(block, d)
    max_atoms = cfg.resolve_max_atoms(block)

    iterations = 0
    while norm > 0.0 and norm >= cfg.rho and iterations < max_atoms:
        alpha, idx = select_atom(r, d)
        if alpha == 0.0:
            break
        iterations += 1
        decomp.add(idx, alpha)
        rank1_update(r, *_factors(d, idx), alpha)
        norm = norm_3d(r)
        decomp.residual_history.append(norm)

    return _finish(decomp, norm, cfg.rho, 'mp3d')


def spmp3d(block: Image3, d: SeparableDictionary3, cfg: PursuitConfig) -> AtomicDecomposition:
    """Self-projected matching pursuit.

    Step i selects one atom over the full dictionary and subtracts its
    component. Step ii projects the residual off the span of every atom
    selected so far, every ``projection_period`` atoms and once more before
    returning if the last step was not projected.
    """
    r, decomp, norm = _start(block, d)
    epsilon = cfg.resolve_epsilon(norm)
    max_atoms = cfg.resolve_max_atoms(block)

    iterations = 0
    pending = 0
    while norm > 0.0 and norm >= cfg.rho and iterations < max_atoms:
        alpha, idx = select_atom(r, d)
        if abs(alpha) < epsilon:
            break
        iterations += 1
        decomp.add(idx, alpha)
        rank1_update(r, *_factors(d, idx), alpha)
        pending += 1

        if pending >= cfg.projection_period:
            result = self_project(r, decomp, d, epsilon, cfg.max_j)
            decomp.projection_sweeps.append(result.sweeps)
            pending = 0

        norm = norm_3d(r)
        decomp.residual_history.append(norm)

    if pending:
        result = self_project(r, decomp, d, epsilon, cfg.max_j)
        decomp.projection_sweeps.append(result.sweeps)
        norm = norm_3d(r)
        decomp.residual_history[-1] = norm

    return _finish(decomp, norm, cfg.rho, 'spmp3d')


def _dense_atom(d: SeparableDictionary3, idx: AtomIndex) -> np.ndarray:
    """Vectorized gx ⊗ gy ⊗ gz in the (nz, nx, ny) storage order."""
    gx, gy, gz = _factors(d, idx)
    return np.multiply.outer(gz, np.multiply.outer(gx, gy)).ravel()


def _masked_search(r: Image3, d: SeparableDictionary3,
                   excluded: Iterable[AtomIndex]) -> Tuple[float, Optional[AtomIndex]]:
    """Dense correlation search skipping ``excluded`` triples, same scan order as select_atom."""
    corr = np.einsum('sc,ia,jb,sij->cab', d.dz.atoms, d.dx.atoms, d.dy.atoms, r.planes)
    magnitude = np.abs(corr)
    for lx, ly, lz in excluded:
        magnitude[lz - 1, lx - 1, ly - 1] = -1.0
    if magnitude.max() <= 0.0:
        return 0.0, None
    c, a, b = np.unravel_index(_first_max(magnitude.ravel()), magnitude.shape)
    return float(corr[c, a, b]), AtomIndex(int(a) + 1, int(b) + 1, int(c) + 1)


def omp3d(block: Image3, d: SeparableDictionary3, cfg: PursuitConfig) -> AtomicDecomposition:
    """Orthogonal matching pursuit through adaptive biorthogonalization.

    Keeps the dense orthonormal sequence Q (the normalized W_n, built with
    one re-orthogonalization pass) and the biorthogonal duals B_n, so memory
    grows as 2k block-sized vectors. Only suitable for small blocks.
    """
    r, decomp, norm = _start(block, d)
    max_atoms = cfg.resolve_max_atoms(block)
    signal = block.planes.ravel()

    atoms: List[np.ndarray] = []
    q_basis: List[np.ndarray] = []
    duals: List[np.ndarray] = []
    rejected = set()

    while norm > 0.0 and norm >= cfg.rho and decomp.k < max_atoms:
        alpha, idx = select_atom(r, d)
        if idx in rejected or decomp.position(idx) is not None:
            alpha, idx = _masked_search(r, d, rejected | set(decomp.indices))
        if idx is None or alpha == 0.0:
            break

        a_new = _dense_atom(d, idx)
        w = a_new.copy()
        for _ in range(2):
            for q in q_basis:
                w -= q * np.dot(q, w)
        w_norm = float(np.linalg.norm(w))
        if w_norm < DEPENDENT_ATOM_TOL:
            logger.warning(f"omp3d rejected linearly dependent atom {tuple(idx)} (|W|={w_norm:.3g})")
            rejected.add(idx)
            continue

        b_new = w / w_norm ** 2
        duals = [b - b_new * np.dot(a_new, b) for b in duals]
        duals.append(b_new)
        q_basis.append(w / w_norm)
        atoms.append(a_new)
        decomp.add(idx, 0.0)

        coefficients = np.array([np.dot(b, signal) for b in duals])
        decomp.coefficients = coefficients.tolist()
        residual = signal - np.asarray(atoms).T @ coefficients
        r.planes[...] = residual.reshape(r.planes.shape)
        norm = norm_3d(r)
        decomp.residual_history.append(norm)

    return _finish(decomp, norm, cfg.rho, 'omp3d')


ENGINES = {
    'spmp3d': spmp3d,
    'mp3d': mp3d,
    'omp3d': omp3d,
}


def memory_footprint(nb: int, r: int, k: int, index_bytes: int = 4,
                     real_bytes: int = 8) -> MemoryFootprint:
    """Bytes an SPMP3D worker needs for an nb³ block at per-axis redundancy r."""
    for name, value in (('nb', nb), ('r', r), ('index_bytes', index_bytes), ('real_bytes', real_bytes)):
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return MemoryFootprint(
        block_arrays=2 * nb ** 3 * real_bytes,
        dictionaries=3 * nb * (r * nb) * real_bytes,
        selection_scratch=r * r * nb * nb * real_bytes,
        coefficients=k * real_bytes,
        indices=3 * k * index_bytes,
    )


def rho_from_psnr(psnr_db: float, block_points: int, imax: float) -> float:
    """Per-block residual target so that every block meeting it yields ``psnr_db`` overall."""
    if imax <= 0:
        raise ValueError(f"imax must be positive, got {imax}")
    return math.sqrt(block_points * imax ** 2 / 10 ** (psnr_db / 10))


def rho_from_snr(snr_db: float, signal_energy: float, total_points: int, block_points: int) -> float:
    """Per-block residual target giving each block its share of the SNR error budget."""
    if total_points <= 0:
        raise ValueError(f"total_points must be positive, got {total_points}")
    return math.sqrt(block_points / total_points * signal_energy / 10 ** (snr_db / 10))
