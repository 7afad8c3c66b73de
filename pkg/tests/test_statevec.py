import numpy as np
import pytest

from qns.lattice import build_lattice, neel_pattern, sample_disorder
from qns.statevec import (
    RAD_PER_NS,
    HamiltonianOp,
    StateVector,
    apply_hamiltonian,
    apply_rotation,
    basis_distribution,
    basis_state,
    evolve,
    excitation_probability,
    imbalance,
    load_statevector,
    neel_state,
    overlap_fidelity,
    save_statevector,
    total_excitation,
)

from conftest import dense_propagator, random_state


# ---------------------------------------------------------------------------
# basis states
# ---------------------------------------------------------------------------


def test_basis_state_vacuum(lat33):
    vac = basis_state(lat33, 0)
    assert vac.amplitudes[0] == 1.0
    assert vac.norm() == 1.0


def test_basis_state_neel(lat33):
    state = neel_state(lat33)
    assert state.amplitudes[neel_pattern(lat33)] == 1.0
    assert state.norm() == 1.0


def test_basis_state_range(lat12):
    with pytest.raises(ValueError):
        basis_state(lat12, 4)


# ---------------------------------------------------------------------------
# Hamiltonian action
# ---------------------------------------------------------------------------


def test_h0_annihilates_vacuum(lat33):
    h0 = HamiltonianOp.from_lattice(lat33)
    out = apply_hamiltonian(h0, basis_state(lat33, 0))
    assert np.all(out == 0)


def test_xy_swap_amplitude(lat12):
    # hand expansion of (sx sx + sy sy)/2 on |10>: unit-weight swap to |01>
    h = HamiltonianOp.from_lattice(lat12)
    state = basis_state(lat12, 0b01)  # qubit 0 excited
    out = apply_hamiltonian(h, state)
    expected = 2.185 * RAD_PER_NS
    assert out[0b10] == pytest.approx(expected, rel=1e-12)
    assert out[0b01] == 0.0


def test_detuning_signs(lat12):
    h = HamiltonianOp.from_lattice(lat12, np.array([3.0, -1.0]))
    out = apply_hamiltonian(h, basis_state(lat12, 0b01))
    # bit0 = 1 contributes +d0, bit1 = 0 contributes -d1
    assert out[0b01] == pytest.approx((3.0 + 1.0) * RAD_PER_NS)


def test_hermiticity(lat33):
    h = HamiltonianOp.from_lattice(lat33, sample_disorder(lat33, 25.0, 8))
    u = random_state(9, 10)
    v = random_state(9, 11)
    lhs = np.vdot(u, h.matvec(v))
    rhs = np.conj(np.vdot(v, h.matvec(u)))
    assert abs(lhs - rhs) < 1e-10


def test_sector_conservation_of_action(lat33):
    h = HamiltonianOp.from_lattice(lat33, sample_disorder(lat33, 25.0, 9))
    state = neel_state(lat33)
    out = apply_hamiltonian(h, state)
    k = bin(neel_pattern(lat33)).count("1")
    populated = np.nonzero(np.abs(out) > 0)[0]
    assert all(bin(int(b)).count("1") == k for b in populated)


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------


def test_evolve_t0_identity(lat33):
    h = HamiltonianOp.from_lattice(lat33, sample_disorder(lat33, 10.0, 1))
    state = neel_state(lat33)
    out = evolve(h, state, 0.0)
    assert np.array_equal(out.amplitudes, state.amplitudes)
    assert out.amplitudes is not state.amplitudes


def test_two_level_rabi(lat12):
    h = HamiltonianOp.from_lattice(lat12)
    state = basis_state(lat12, 0b01)
    omega = 2 * np.pi * 2.185e-3
    for t in (30.0, 114.4, 250.0):
        out = evolve(h, state, t)
        p_swap = abs(out.amplitudes[0b10]) ** 2
        assert p_swap == pytest.approx(np.sin(omega * t) ** 2, abs=1e-10)
    # quarter period: full transfer
    out = evolve(h, state, 114.4)
    assert abs(out.amplitudes[0b10]) ** 2 > 0.9999


def test_evolve_matches_dense_oracle(lat33):
    profile = sample_disorder(lat33, 40.0, 77)
    h = HamiltonianOp.from_lattice(lat33, profile)
    state = neel_state(lat33)
    expected = dense_propagator(h, 200.0) @ state.amplitudes
    got = evolve(h, state, 200.0)
    assert np.linalg.norm(got.amplitudes - expected) < 1e-8


def test_norm_and_number_conservation(lat33):
    h = HamiltonianOp.from_lattice(lat33, sample_disorder(lat33, 40.0, 13))
    state = neel_state(lat33)
    n0 = total_excitation(state)
    out = evolve(h, state, 1000.0)
    assert abs(out.norm() - 1.0) < 1e-10
    assert abs(total_excitation(out) - n0) < 1e-9


def test_evolve_composition(lat33):
    h = HamiltonianOp.from_lattice(lat33, sample_disorder(lat33, 20.0, 14))
    state = neel_state(lat33)
    once = evolve(h, state, 170.0)
    stepped = evolve(h, evolve(h, state, 70.0), 100.0)
    assert np.linalg.norm(once.amplitudes - stepped.amplitudes) < 1e-8


def test_evolve_validation(lat12):
    h = HamiltonianOp.from_lattice(lat12)
    state = basis_state(lat12, 1)
    with pytest.raises(ValueError):
        evolve(h, state, -1.0)
    with pytest.raises(ValueError):
        evolve(h, state, 10.0, tol=0.0)


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------


def test_rotation_phi_zero_is_identity(lat22):
    state = StateVector(4, random_state(4, 21))
    before = state.amplitudes.copy()
    for theta in (0.0, 1.1, -2.5):
        apply_rotation(state, 2, theta, 0.0)
        np.testing.assert_array_equal(state.amplitudes, before)


def test_rotation_pi_flip(lat22):
    state = basis_state(lat22, 0)
    apply_rotation(state, 1, 0.0, np.pi)
    assert excitation_probability(state, 1) == pytest.approx(1.0, abs=1e-15)


def test_rotation_equatorial_half(lat22):
    for theta in (0.0, 0.9, 2.0):
        state = basis_state(lat22, 0)
        apply_rotation(state, 0, theta, np.pi / 2)
        assert excitation_probability(state, 0) == pytest.approx(0.5, abs=1e-12)


def test_rotation_reversal_identity(lat22):
    state = StateVector(4, random_state(4, 22))
    before = state.amplitudes.copy()
    apply_rotation(state, 3, 0.7, 1.3)
    apply_rotation(state, 3, 0.7, -1.3)
    assert np.linalg.norm(state.amplitudes - before) < 1e-12


def test_rotation_axis_convention(lat12):
    # R(theta, phi) = exp(-i phi (cos(theta) sx + sin(theta) sy)/2)
    import scipy.linalg

    theta, phi = 0.8, 1.7
    sx = np.array([[0, 1], [1, 0]])
    sy = np.array([[0, -1j], [1j, 0]])
    expected = scipy.linalg.expm(-1j * phi * (np.cos(theta) * sx + np.sin(theta) * sy) / 2)
    state = basis_state(lat12, 0)
    apply_rotation(state, 0, theta, phi)
    # |00> and |01> components give the matrix column for input |0> on qubit 0
    np.testing.assert_allclose(state.amplitudes[[0, 1]], expected[:, 0], atol=1e-14)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def test_excitation_probability_basis(lat33):
    state = basis_state(lat33, 0b000010100)
    assert excitation_probability(state, 2) == 1.0
    assert excitation_probability(state, 4) == 1.0
    assert excitation_probability(state, 0) == 0.0


def test_excitation_sum_on_neel(lat33):
    state = neel_state(lat33)
    total = sum(excitation_probability(state, q) for q in range(9))
    assert total == pytest.approx(5.0, abs=1e-12)


def test_imbalance_neel_exact(lat33):
    assert imbalance(neel_state(lat33), lat33) == 1.0


def test_imbalance_balanced_superposition(lat12):
    amps = np.zeros(4, dtype=complex)
    amps[0b01] = 1 / np.sqrt(2)
    amps[0b10] = 1 / np.sqrt(2)
    assert imbalance(StateVector(2, amps), lat12) == pytest.approx(0.0, abs=1e-12)


def test_imbalance_two_level_closed_form(lat12):
    h = HamiltonianOp.from_lattice(lat12)
    state = basis_state(lat12, 0b01)
    omega = 2 * np.pi * 2.185e-3
    for t in (11.0, 47.0, 150.0):
        out = evolve(h, state, t)
        expected = np.cos(omega * t) ** 2 - np.sin(omega * t) ** 2
        assert imbalance(out, lat12) == pytest.approx(expected, abs=1e-9)


def test_imbalance_phase_invariance(lat33):
    state = neel_state(lat33)
    rotated = StateVector(9, state.amplitudes * np.exp(0.7j))
    assert imbalance(rotated, lat33) == pytest.approx(1.0, abs=1e-12)


def test_imbalance_vacuum_error(lat33):
    with pytest.raises(ValueError):
        imbalance(basis_state(lat33, 0), lat33)


def test_basis_distribution(lat22):
    vac = basis_state(lat22, 0)
    dist = basis_distribution(vac)
    assert dist[0] == 1.0 and dist[1:].sum() == 0.0
    uniform = StateVector(4, np.full(16, 0.25, dtype=complex))
    np.testing.assert_allclose(basis_distribution(uniform), np.full(16, 1 / 16))
    rand = StateVector(4, random_state(4, 30))
    d = basis_distribution(rand)
    assert np.all(d >= 0)
    assert d.sum() == pytest.approx(1.0, abs=1e-10)


def test_overlap_fidelity():
    rng = np.random.default_rng(0)
    p = rng.random(32)
    assert overlap_fidelity(p, p) == pytest.approx(1.0, abs=1e-14)
    assert overlap_fidelity(p, 2 * p) == pytest.approx(1.0, abs=1e-14)
    q = np.zeros(32)
    q[:16] = p[:16]
    r = np.zeros(32)
    r[16:] = p[16:]
    assert overlap_fidelity(q, r) == 0.0
    with pytest.raises(ValueError):
        overlap_fidelity(p, np.zeros(32))
    with pytest.raises(ValueError):
        overlap_fidelity(p, -p)


# ---------------------------------------------------------------------------
# binary dump
# ---------------------------------------------------------------------------


def test_statevector_dump_roundtrip(tmp_path, lat33):
    h = HamiltonianOp.from_lattice(lat33, sample_disorder(lat33, 30.0, 55))
    state = evolve(h, neel_state(lat33), 120.0)
    path = tmp_path / "state.bin"
    save_statevector(path, state)
    loaded = load_statevector(path)
    assert loaded.num_qubits == 9
    assert np.array_equal(loaded.amplitudes, state.amplitudes)


def test_statevector_dump_format(tmp_path, lat12):
    state = basis_state(lat12, 0b10)
    path = tmp_path / "state.bin"
    save_statevector(path, state)
    raw = path.read_bytes()
    # header: u32 N_q, u64 count, little endian; payload: re/im f64 pairs
    assert raw[:4] == (2).to_bytes(4, "little")
    assert raw[4:12] == (4).to_bytes(8, "little")
    payload = np.frombuffer(raw[12:], dtype="<f8")
    assert payload.shape == (8,)
    assert payload[4] == 1.0  # re of amplitude at basis index 2


def test_qubit_cap():
    with pytest.raises(ValueError):
        HamiltonianOp(30, [])
