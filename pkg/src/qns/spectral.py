"""Excitation-sector diagonalization and level-spacing statistics.

The XY + sigma_z Hamiltonian conserves total excitation number, so its
spectrum splits into sectors of fixed popcount k with dimension C(N, k).
Dense diagonalization inside one sector is the independent physics probe
the trained classifier is compared against: the mean gap ratio of
consecutive level spacings distinguishes ergodic (r ~ 0.53, random-matrix)
from localized (r ~ 0.386, Poissonian) spectra without any unfolding.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from qns.lattice import LatticeSpec, edges, neel_pattern, sample_disorder
from qns.parallel import parallel_map
from qns.seeding import derive_seed
from qns.statevec import RAD_PER_NS

SECTOR_DIM_CAP = 20_000


@dataclass(frozen=True)
class SectorBasis:
    """Ordered basis of the fixed-excitation sector."""

    num_qubits: int
    excitation_count: int
    bitmasks: np.ndarray  # ascending int64, length C(N, k)

    def __post_init__(self):
        masks = np.asarray(self.bitmasks, dtype=np.int64)
        masks.flags.writeable = False
        object.__setattr__(self, "bitmasks", masks)

    @property
    def dim(self) -> int:
        return self.bitmasks.shape[0]

    def index_of(self, bitmask: int) -> int:
        pos = int(np.searchsorted(self.bitmasks, bitmask))
        if pos >= self.dim or self.bitmasks[pos] != bitmask:
            raise KeyError(f"bitmask {bitmask} not in sector")
        return pos

    def embed(self, sector_vec: np.ndarray) -> np.ndarray:
        """Scatter a sector vector into the full 2^N space."""
        full = np.zeros(1 << self.num_qubits, dtype=sector_vec.dtype)
        full[self.bitmasks] = sector_vec
        return full

    def project(self, full_vec: np.ndarray) -> np.ndarray:
        """Restrict a full 2^N vector to the sector components."""
        return full_vec[self.bitmasks]


@dataclass(frozen=True)
class SpectrumResult:
    """Sorted sector eigenvalues (rad/ns) with disorder provenance."""

    energies: np.ndarray
    seed: int
    h_mhz: float


def sector_basis(num_qubits: int, k: int) -> SectorBasis:
    if not 0 <= k <= num_qubits:
        raise ValueError(f"excitation count {k} outside 0..{num_qubits}")
    dim = math.comb(num_qubits, k)
    if dim > SECTOR_DIM_CAP:
        raise ValueError(
            f"sector dimension {dim} exceeds the dense cap {SECTOR_DIM_CAP}"
        )
    masks = np.fromiter(
        (sum(1 << i for i in combo) for combo in combinations(range(num_qubits), k)),
        dtype=np.int64,
        count=dim,
    )
    masks.sort()
    return SectorBasis(num_qubits, k, masks)


def sector_hamiltonian(lattice: LatticeSpec, disorder, k: int) -> np.ndarray:
    """Dense Hermitian matrix of the Hamiltonian restricted to the sector.

    ``disorder`` is a DisorderProfile, a detuning vector in MHz, or None
    for the clean Hamiltonian.  Entries are in rad/ns and match the
    matrix-free full-space action restricted to popcount-k basis states.
    """
    basis = sector_basis(lattice.num_qubits, k)
    if disorder is None:
        det = np.zeros(lattice.num_qubits)
    else:
        det = np.asarray(getattr(disorder, "detunings_mhz", disorder), dtype=float)
    if det.shape != (lattice.num_qubits,):
        raise ValueError("detunings length must equal the qubit count")
    det_rad = det * RAD_PER_NS

    masks = basis.bitmasks
    dim = basis.dim
    mat = np.zeros((dim, dim))
    signs = 2.0 * ((masks[:, None] >> np.arange(lattice.num_qubits)) & 1) - 1.0
    np.fill_diagonal(mat, signs @ det_rad)
    for i, j, g in edges(lattice):
        w = g * RAD_PER_NS
        bit_i = (masks >> i) & 1
        bit_j = (masks >> j) & 1
        rows = np.nonzero((bit_i == 1) & (bit_j == 0))[0]
        partners = masks[rows] ^ ((1 << i) | (1 << j))
        cols = np.searchsorted(masks, partners)
        mat[rows, cols] += w
        mat[cols, rows] += w
    return mat


def sector_spectrum(lattice: LatticeSpec, h_mhz: float, seed: int, k: int) -> SpectrumResult:
    """Eigenvalues of one disorder realization in one sector."""
    disorder = sample_disorder(lattice, h_mhz, seed)
    energies = np.linalg.eigvalsh(sector_hamiltonian(lattice, disorder, k))
    return SpectrumResult(energies=energies, seed=int(seed), h_mhz=float(h_mhz))


def gap_ratios(energies, degenerate_tol: float = 1e-12, return_skipped: bool = False):
    """r_n = min(d_n, d_{n-1}) / max(d_n, d_{n-1}) over consecutive spacings.

    ``energies`` must be sorted ascending.  Pairs whose two spacings are
    both below ``degenerate_tol`` (exact degeneracies) are skipped; pass
    ``return_skipped=True`` to also get their count.
    """
    e = np.asarray(energies, dtype=float)
    if e.shape[0] < 3:
        raise ValueError("need at least 3 energies for a gap ratio")
    d = np.diff(e)
    if np.any(d < -1e-9 * max(1.0, float(np.max(np.abs(e))))):
        raise ValueError("energies must be sorted ascending")
    d = np.maximum(d, 0.0)
    lo = np.minimum(d[:-1], d[1:])
    hi = np.maximum(d[:-1], d[1:])
    keep = hi > degenerate_tol
    ratios = lo[keep] / hi[keep]
    skipped = int(np.count_nonzero(~keep))
    if return_skipped:
        return ratios, skipped
    return ratios


@dataclass(frozen=True)
class GapRatioSweep:
    """Mean gap ratio vs disorder strength, averaged over realizations."""

    h_over_g: np.ndarray
    r_mean: np.ndarray
    r_stderr: np.ndarray
    realizations: int

    def columns(self):
        return ["h_over_g", "r_mean", "r_stderr", "realizations"]

    def rows(self):
        return [
            [float(h), float(m), float(s), self.realizations]
            for h, m, s in zip(self.h_over_g, self.r_mean, self.r_stderr)
        ]


def mean_gap_ratio_sweep(
    lattice: LatticeSpec,
    k: int,
    h_over_g_grid,
    realizations: int,
    seed: int,
    middle_fraction: float | None = None,
    threads: int = 1,
) -> GapRatioSweep:
    """Sweep disorder strength and average gap ratios per grid point.

    For each h/g the ratios of every disorder realization are averaged
    (realizations weighted equally); the quoted stderr is the standard
    error of the per-realization means.  Realization seeds derive from
    (seed, point index, realization index), so the curve is deterministic
    and independent of the thread count.
    """
    if realizations < 1:
        raise ValueError("need at least one realization")
    grid = np.asarray(h_over_g_grid, dtype=float)
    g = lattice.coupling_mhz

    def one_realization(task):
        point, real = task
        h_mhz = grid[point] * g
        spectrum = sector_spectrum(
            lattice, h_mhz, derive_seed(seed, "gap-sweep", point, real), k
        )
        energies = spectrum.energies
        if middle_fraction is not None:
            n_keep = max(3, int(round(middle_fraction * energies.shape[0])))
            start = (energies.shape[0] - n_keep) // 2
            energies = energies[start : start + n_keep]
        return float(np.mean(gap_ratios(energies)))

    tasks = [(p, r) for p in range(grid.shape[0]) for r in range(realizations)]
    per_real = np.array(parallel_map(one_realization, tasks, threads))
    per_real = per_real.reshape(grid.shape[0], realizations)
    r_mean = per_real.mean(axis=1)
    if realizations > 1:
        r_stderr = per_real.std(axis=1, ddof=1) / np.sqrt(realizations)
    else:
        r_stderr = np.zeros_like(r_mean)
    return GapRatioSweep(grid, r_mean, r_stderr, realizations)


def neel_sector_count(lattice: LatticeSpec) -> int:
    """Excitation count of the Neel initial state (the dynamical sector)."""
    return int(bin(neel_pattern(lattice)).count("1"))


def correlation_coefficient(a, b) -> float:
    """Pearson correlation R = C12 / sqrt(C11 C22) of two equal-length arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1D arrays of equal length")
    if a.shape[0] < 2:
        raise ValueError("need at least 2 points")
    cov = np.cov(a, b)
    if cov[0, 0] <= 0 or cov[1, 1] <= 0:
        raise ValueError("correlation undefined for zero-variance input")
    return float(cov[0, 1] / np.sqrt(cov[0, 0] * cov[1, 1]))


def spearman_correlation(a, b) -> float:
    """Spearman rank correlation (Pearson correlation of the ranks)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return correlation_coefficient(_ranks(a), _ranks(b))


def _ranks(x: np.ndarray) -> np.ndarray:
    """Average ranks, handling ties."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0])
    sx = x[order]
    i = 0
    while i < x.shape[0]:
        j = i
        while j + 1 < x.shape[0] and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j)
        i = j + 1
    return ranks
