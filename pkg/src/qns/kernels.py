"""Hot inner loops: matrix-free Hamiltonian action and single-qubit gates.

Two interchangeable backends are provided.  The numba backend JIT-compiles
tight loops over the 2^N amplitude array; the numpy backend does the same
work with vectorized fancy indexing.  Both apply the identical arithmetic
in the identical order, so they agree to the last few ulp.

Backend selection is controlled by the environment variable
``QNS_KERNEL_BACKEND``:

- ``auto`` (default): numba if importable, else numpy
- ``numba``: require numba, raise if unavailable
- ``numpy``: force the pure-numpy path (useful for debugging and as a
  baseline in ``benchmarks/bench_kernels.py``)
"""

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via QNS_KERNEL_BACKEND
    numba = None
    _HAVE_NUMBA = False


def _select_backend() -> str:
    choice = os.environ.get("QNS_KERNEL_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"QNS_KERNEL_BACKEND must be auto|numba|numpy, got {choice!r}"
        )
    if choice == "numba" and not _HAVE_NUMBA:
        raise ImportError("QNS_KERNEL_BACKEND=numba but numba is not installed")
    if choice == "auto":
        return "numba" if _HAVE_NUMBA else "numpy"
    return choice


_BACKEND = _select_backend()


def backend_name() -> str:
    """Active kernel backend, ``"numba"`` or ``"numpy"``."""
    return _BACKEND


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def _ham_apply_numpy(diag, idx_up, idx_dn, weights, psi, out):
    np.multiply(diag, psi, out=out)
    for e in range(weights.shape[0]):
        a = idx_up[e]
        b = idx_dn[e]
        w = weights[e]
        out[a] += w * psi[b]
        out[b] += w * psi[a]
    return out


def _rotation_apply_numpy(psi, stride, u00, u01, u10, u11):
    view = psi.reshape(-1, 2, stride)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = u00 * a0 + u01 * a1
    view[:, 1, :] = u10 * a0 + u11 * a1
    return psi


def _bit_probability_numpy(psi, stride):
    prob = (psi.real * psi.real + psi.imag * psi.imag).reshape(-1, 2, stride)
    return float(prob[:, 1, :].sum())


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _ham_apply_numba(diag, idx_up, idx_dn, weights, psi, out):
        n = psi.shape[0]
        for i in range(n):
            out[i] = diag[i] * psi[i]
        n_edges, n_pairs = idx_up.shape
        for e in range(n_edges):
            w = weights[e]
            for k in range(n_pairs):
                a = idx_up[e, k]
                b = idx_dn[e, k]
                out[a] += w * psi[b]
                out[b] += w * psi[a]
        return out

    @numba.njit(cache=True)
    def _rotation_apply_numba(psi, stride, u00, u01, u10, u11):
        n = psi.shape[0]
        block = 2 * stride
        for base in range(0, n, block):
            for k in range(base, base + stride):
                a0 = psi[k]
                a1 = psi[k + stride]
                psi[k] = u00 * a0 + u01 * a1
                psi[k + stride] = u10 * a0 + u11 * a1
        return psi

    @numba.njit(cache=True)
    def _bit_probability_numba(psi, stride):
        n = psi.shape[0]
        block = 2 * stride
        total = 0.0
        for base in range(0, n, block):
            for k in range(base + stride, base + block):
                a = psi[k]
                total += a.real * a.real + a.imag * a.imag
        return total


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------

if _BACKEND == "numba":
    _ham_apply = _ham_apply_numba
    _rotation_apply = _rotation_apply_numba
    _bit_probability = _bit_probability_numba
else:
    _ham_apply = _ham_apply_numpy
    _rotation_apply = _rotation_apply_numpy
    _bit_probability = _bit_probability_numpy


def ham_apply(diag, idx_up, idx_dn, weights, psi, out):
    """out = H @ psi for a number-conserving XY + diagonal Hamiltonian.

    ``diag`` is the precomputed diagonal (rad/ns), ``idx_up[e]`` the basis
    indices with the pattern 1/0 on edge ``e``'s endpoints, ``idx_dn`` their
    swap partners, ``weights[e]`` the hop amplitude (rad/ns).  Within one
    edge, the index pairs are disjoint, so the scatter-add is well defined.
    """
    return _ham_apply(diag, idx_up, idx_dn, weights, psi, out)


def rotation_apply(psi, stride, u00, u01, u10, u11):
    """In-place 2x2 unitary on the qubit whose bit stride is ``stride``."""
    return _rotation_apply(psi, stride, u00, u01, u10, u11)


def bit_probability(psi, stride):
    """Total |amplitude|^2 over basis states with the strided bit set."""
    return float(_bit_probability(psi, stride))
