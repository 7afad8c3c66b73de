"""Simulator and training stack for classifying disordered XY-lattice states.

The package prepares ergodic or localized many-body states of a disordered
2D XY qubit lattice, trains a digital-analog variational circuit to tell
them apart from a single readout qubit, and cross-checks the classifier
against independent spectral and dynamical probes (gap-ratio level
statistics, sublattice imbalance).

Layout:

- :mod:`qns.lattice`     grid geometry, couplings, disorder, Neel pattern
- :mod:`qns.statevec`    full 2^N state vectors, matrix-free Hamiltonian,
                         Lanczos propagator, single-qubit gates, observables
- :mod:`qns.spectral`    excitation-sector diagonalization, gap ratios
- :mod:`qns.qnn`         variational classifier, losses, gradients, training
- :mod:`qns.experiments` reproducible end-to-end pipelines and noise model
- :mod:`qns.cli`         command-line entry point (``qns <subcommand>``)
- :mod:`qns.kernels`     numba-accelerated hot loops with numpy fallback
"""

__version__ = "0.1.0"

from qns.lattice import (
    LatticeSpec,
    DisorderProfile,
    build_lattice,
    default_readout,
    neel_pattern,
    sample_disorder,
    edges,
)
from qns.statevec import (
    StateVector,
    HamiltonianOp,
    basis_state,
    apply_hamiltonian,
    evolve,
    apply_rotation,
    excitation_probability,
    imbalance,
    basis_distribution,
    overlap_fidelity,
)

__all__ = [
    "LatticeSpec",
    "DisorderProfile",
    "build_lattice",
    "default_readout",
    "neel_pattern",
    "sample_disorder",
    "edges",
    "StateVector",
    "HamiltonianOp",
    "basis_state",
    "apply_hamiltonian",
    "evolve",
    "apply_rotation",
    "excitation_probability",
    "imbalance",
    "basis_distribution",
    "overlap_fidelity",
]
