import numpy as np
import pytest
import scipy.linalg

from qns.lattice import build_lattice


@pytest.fixture(scope="session")
def lat12():
    return build_lattice(1, 2, coupling_mhz=2.185)


@pytest.fixture(scope="session")
def lat22():
    return build_lattice(2, 2, coupling_mhz=2.185)


@pytest.fixture(scope="session")
def lat33():
    return build_lattice(3, 3, coupling_mhz=2.185)


def dense_propagator(h, t_ns):
    """Independent oracle: eigendecomposition-based exp(-i H t)."""
    return scipy.linalg.expm(-1j * h.dense() * t_ns)


def random_state(num_qubits, seed):
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=1 << num_qubits) + 1j * rng.normal(size=1 << num_qubits)
    amps /= np.linalg.norm(amps)
    return amps
