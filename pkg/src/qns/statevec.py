"""Full 2^N state vectors, matrix-free Hamiltonian action, Lanczos evolution.

Conventions
-----------
- Basis index ``b`` encodes qubit ``i``'s state as bit ``i`` of ``b``.
- ``sigma_z |1> = +|1>``: a positive detuning raises the excited level.
- The public API takes MHz and ns; the engine multiplies by ``2*pi*1e-3``
  so Hamiltonian action is in angular rad/ns and ``evolve`` computes
  ``exp(-i (H/hbar) t)``.
- Global phase is not meaningful; all observables are phase-invariant.

A ``StateVector`` is owned by one task at a time (gates mutate it in
place); a ``HamiltonianOp`` is immutable and shareable.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from qns import kernels
from qns.lattice import DisorderProfile, LatticeSpec, edges, neel_pattern

RAD_PER_NS = 2.0 * np.pi * 1e-3  # MHz -> angular rad/ns

MAX_QUBITS = 24  # 2^24 complex amplitudes = 256 MiB; hard cap for full vectors
KRYLOV_DIM = 30
_BREAKDOWN = 1e-14


@dataclass
class StateVector:
    """Normalized complex amplitudes over the computational basis."""

    num_qubits: int
    amplitudes: np.ndarray

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


class HamiltonianOp:
    """Matrix-free XY + on-site sigma_z Hamiltonian.

    Action (in rad/ns): each edge (i, j) couples basis pairs differing by a
    01<->10 swap on (i, j) with amplitude ``2*pi*1e-3*g_mhz``; each site adds
    ``+2*pi*1e-3*d_mhz`` on the diagonal where bit i is set and the opposite
    sign where it is clear.  Work per application is O(E * 2^N); the 2^N x
    2^N matrix is never stored.
    """

    def __init__(self, num_qubits: int, edge_list, detunings_mhz=None):
        if num_qubits < 1:
            raise ValueError("need at least one qubit")
        if num_qubits > MAX_QUBITS:
            raise ValueError(
                f"{num_qubits} qubits exceeds the full-vector cap of {MAX_QUBITS}"
            )
        self.num_qubits = int(num_qubits)
        self.edge_list = tuple((int(i), int(j), float(g)) for i, j, g in edge_list)
        if detunings_mhz is None:
            det = np.zeros(num_qubits)
        elif isinstance(detunings_mhz, DisorderProfile):
            det = np.asarray(detunings_mhz.detunings_mhz, dtype=float)
        else:
            det = np.asarray(detunings_mhz, dtype=float)
        if det.shape != (num_qubits,):
            raise ValueError("detunings length must equal the qubit count")
        self.detunings_mhz = det

        dim = 1 << num_qubits
        idx = np.arange(dim, dtype=np.int64)
        diag = np.zeros(dim)
        for i in range(num_qubits):
            d = det[i] * RAD_PER_NS
            if d != 0.0:
                diag += d * (2.0 * ((idx >> i) & 1) - 1.0)
        n_edges = len(self.edge_list)
        n_pairs = dim // 4 if n_edges else 0
        idx_up = np.empty((n_edges, n_pairs), dtype=np.int64)
        idx_dn = np.empty((n_edges, n_pairs), dtype=np.int64)
        weights = np.empty(n_edges)
        for e, (i, j, g) in enumerate(self.edge_list):
            if i == j or not (0 <= i < num_qubits and 0 <= j < num_qubits):
                raise ValueError(f"bad edge ({i}, {j})")
            sel = (((idx >> i) & 1) == 1) & (((idx >> j) & 1) == 0)
            up = idx[sel]
            idx_up[e] = up
            idx_dn[e] = up ^ ((1 << i) | (1 << j))
            weights[e] = g * RAD_PER_NS
        self._diag = diag
        self._idx_up = idx_up
        self._idx_dn = idx_dn
        self._weights = weights
        # Gershgorin-style bound on the spectral radius, used to pick the
        # initial Lanczos substep.
        self._norm_bound = float(np.max(np.abs(diag)) + np.sum(weights)) or 1e-30

    @classmethod
    def from_lattice(cls, lattice: LatticeSpec, disorder=None) -> "HamiltonianOp":
        """Hamiltonian of a lattice; ``disorder=None`` gives the clean H_0."""
        return cls(lattice.num_qubits, edges(lattice), disorder)

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def matvec(self, vec: np.ndarray, out=None) -> np.ndarray:
        if out is None:
            out = np.empty_like(vec)
        return kernels.ham_apply(
            self._diag, self._idx_up, self._idx_dn, self._weights, vec, out
        )

    def dense(self) -> np.ndarray:
        """Dense real-symmetric matrix (rad/ns); small systems only."""
        if self.dim > 4096:
            raise ValueError("dense form limited to 12 qubits")
        mat = np.zeros((self.dim, self.dim))
        np.fill_diagonal(mat, self._diag)
        for e in range(self._weights.shape[0]):
            mat[self._idx_up[e], self._idx_dn[e]] += self._weights[e]
            mat[self._idx_dn[e], self._idx_up[e]] += self._weights[e]
        return mat


def basis_state(lattice: LatticeSpec, bitmask: int) -> StateVector:
    """Computational basis state |bitmask> over the active qubits."""
    n = lattice.num_qubits
    if not 0 <= bitmask < (1 << n):
        raise ValueError(f"bitmask {bitmask} out of range for {n} qubits")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[bitmask] = 1.0
    return StateVector(n, amps)


def neel_state(lattice: LatticeSpec) -> StateVector:
    """Product state with the checkerboard sublattice excited."""
    return basis_state(lattice, neel_pattern(lattice))


def apply_hamiltonian(h: HamiltonianOp, state: StateVector) -> np.ndarray:
    """(H/hbar)|psi> in rad/ns, returned as a raw (unnormalized) vector."""
    if state.amplitudes.shape[0] != h.dim:
        raise ValueError("state and Hamiltonian dimensions differ")
    return h.matvec(state.amplitudes)


# ---------------------------------------------------------------------------
# Lanczos propagator
# ---------------------------------------------------------------------------


def _krylov_basis(h: HamiltonianOp, v0: np.ndarray, m_max: int):
    """Lanczos basis of the Krylov space of (h, v0), fully reorthogonalized.

    Returns (V, alpha, beta, m, happy) with T_m tridiagonal from alpha[:m]
    and beta[1:m]; beta[m] is the next coupling used by the error estimate.
    ``happy`` flags an invariant subspace (result exact for any step).
    """
    V = np.empty((m_max + 1, v0.shape[0]), dtype=np.complex128)
    alpha = np.zeros(m_max)
    beta = np.zeros(m_max + 1)
    V[0] = v0
    m = m_max
    happy = False
    for j in range(m_max):
        w = h.matvec(V[j])
        a = np.vdot(V[j], w).real
        alpha[j] = a
        w -= a * V[j]
        if j > 0:
            w -= beta[j] * V[j - 1]
        # one full Gram-Schmidt pass keeps the basis orthogonal to ~1e-14
        w -= V[: j + 1].T @ (np.conj(V[: j + 1]) @ w)
        b = float(np.linalg.norm(w))
        beta[j + 1] = b
        if b < _BREAKDOWN:
            m = j + 1
            happy = True
            break
        V[j + 1] = w / b
    return V, alpha, beta, m, happy


def _propagate_tridiag(alpha, beta, m, tau):
    """y = exp(-i tau T_m) e_1 via eigendecomposition of the tridiagonal."""
    if m == 1:
        return np.array([np.exp(-1j * tau * alpha[0])])
    evals, evecs = eigh_tridiagonal(alpha[:m], beta[1:m])
    return evecs @ (np.exp(-1j * tau * evals) * evecs[0, :])


def evolve(h: HamiltonianOp, state: StateVector, t_ns: float, tol: float = 1e-10) -> StateVector:
    """exp(-i (H/hbar) t)|psi> by adaptive-substep Lanczos.

    The Krylov dimension is capped at 30; substeps shrink until the
    a-posteriori error estimate fits the per-substep share of ``tol``.
    The result is renormalized to 1.  ``t_ns = 0`` returns a copy.
    """
    if t_ns < 0:
        raise ValueError("evolution time must be >= 0")
    if tol <= 0:
        raise ValueError("tolerance must be > 0")
    if state.amplitudes.shape[0] != h.dim:
        raise ValueError("state and Hamiltonian dimensions differ")
    psi = state.amplitudes.astype(np.complex128, copy=True)
    if t_ns == 0:
        return StateVector(state.num_qubits, psi)

    elapsed = 0.0
    dt = min(t_ns, 15.0 / h._norm_bound)
    max_substeps = 200_000
    steps = 0
    while elapsed < t_ns * (1.0 - 1e-15):
        steps += 1
        if steps > max_substeps:
            raise RuntimeError(
                "Lanczos propagator failed to converge within "
                f"{max_substeps} substeps (tol={tol})"
            )
        nrm = float(np.linalg.norm(psi))
        V, alpha, beta, m, happy = _krylov_basis(h, psi / nrm, KRYLOV_DIM)
        tau = min(dt, t_ns - elapsed)
        if happy:
            y = _propagate_tridiag(alpha, beta, m, t_ns - elapsed)
            psi = (nrm * y) @ V[:m]
            break
        while True:
            y = _propagate_tridiag(alpha, beta, m, tau)
            err = nrm * beta[m] * abs(y[m - 1])
            budget = tol * max(tau / t_ns, 1e-16)
            if err <= budget:
                break
            tau *= 0.5
            steps += 1
            if steps > max_substeps or tau < t_ns * 1e-15:
                raise RuntimeError(
                    f"Lanczos substep underflow at tol={tol}; "
                    "tolerance is unattainably tight for this Hamiltonian"
                )
        psi = (nrm * y) @ V[:m]
        elapsed += tau
        dt = tau * 2.0 if err < 0.1 * budget else tau

    psi /= np.linalg.norm(psi)
    return StateVector(state.num_qubits, psi)


# ---------------------------------------------------------------------------
# single-qubit gates and observables
# ---------------------------------------------------------------------------


def apply_rotation(state: StateVector, qubit: int, theta_rad: float, phi_rad: float) -> StateVector:
    """In-place Z(theta) X(phi) Z(-theta) on one qubit; returns the state.

    With X(phi)=exp(-i phi sx/2) and Z(theta)=exp(-i theta sz/2) this is a
    rotation by phi about the equatorial axis (cos theta, sin theta, 0).
    """
    _check_qubit(state, qubit)
    c = np.cos(phi_rad / 2.0)
    s = np.sin(phi_rad / 2.0)
    u00 = complex(c)
    u01 = -1j * s * np.exp(-1j * theta_rad)
    u10 = -1j * s * np.exp(1j * theta_rad)
    u11 = complex(c)
    kernels.rotation_apply(state.amplitudes, 1 << qubit, u00, u01, u10, u11)
    return state


def excitation_probability(state: StateVector, qubit: int) -> float:
    """P(qubit reads |1>) = sum of |amplitude|^2 where bit ``qubit`` is set."""
    _check_qubit(state, qubit)
    return kernels.bit_probability(state.amplitudes, 1 << qubit)


def excitation_numbers(state: StateVector) -> np.ndarray:
    """Per-qubit excitation probabilities."""
    return np.array(
        [excitation_probability(state, q) for q in range(state.num_qubits)]
    )


def total_excitation(state: StateVector) -> float:
    """Expected total excitation number (conserved by the XY + sz model)."""
    return float(excitation_numbers(state).sum())


def imbalance(state: StateVector, lattice: LatticeSpec) -> float:
    """(N_even - N_odd) / (N_even + N_odd) over the Neel sublattices.

    N_even sums excitation probabilities over the initially excited
    checkerboard sublattice, N_odd over its complement.  Undefined (raises)
    when the state carries no excitation.
    """
    if state.num_qubits != lattice.num_qubits:
        raise ValueError("state and lattice qubit counts differ")
    pattern = neel_pattern(lattice)
    probs = excitation_numbers(state)
    even_sel = np.array(
        [bool(pattern >> q & 1) for q in range(lattice.num_qubits)]
    )
    n_even = float(probs[even_sel].sum())
    n_odd = float(probs[~even_sel].sum())
    total = n_even + n_odd
    if total < 1e-12:
        raise ValueError("imbalance undefined for a state with no excitation")
    return (n_even - n_odd) / total


def basis_distribution(state: StateVector) -> np.ndarray:
    """Probability of each computational basis outcome."""
    amps = state.amplitudes
    return amps.real * amps.real + amps.imag * amps.imag


def overlap_fidelity(p, q) -> float:
    """Squared statistical overlap (sum sqrt(p_b q_b))^2 / (sum p · sum q).

    Scale-invariant in each argument; 1 iff the normalized distributions
    coincide, 0 for disjoint supports.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must have the same length")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("distributions must be nonnegative")
    sp, sq = p.sum(), q.sum()
    if sp <= 0 or sq <= 0:
        raise ValueError("distributions must have positive total mass")
    return float(np.sqrt(p * q).sum() ** 2 / (sp * sq))


def _check_qubit(state: StateVector, qubit: int) -> None:
    if not 0 <= qubit < state.num_qubits:
        raise ValueError(f"qubit {qubit} out of range for {state.num_qubits} qubits")


# ---------------------------------------------------------------------------
# binary amplitude dump (debugging / cross-language comparison)
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<IQ")  # (num_qubits, amplitude count), little-endian


def save_statevector(path, state: StateVector) -> None:
    """Write ``<u32 N_q><u64 count>`` then interleaved little-endian
    float64 (re, im) pairs, one per amplitude."""
    amps = np.ascontiguousarray(state.amplitudes, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(state.num_qubits, amps.shape[0]))
        fh.write(amps.tobytes())


def load_statevector(path) -> StateVector:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        num_qubits, count = _HEADER.unpack(raw)
        if count != 1 << num_qubits:
            raise ValueError("corrupt state file: count != 2^N_q")
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.shape[0] != count:
        raise ValueError("corrupt state file: truncated payload")
    return StateVector(num_qubits, data.astype(np.complex128))
