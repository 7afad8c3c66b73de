"""Benchmark the numba kernels against the pure-numpy fallback.

Times the matrix-free Hamiltonian application and the single-qubit gate on
growing lattices, for whichever backends are importable.  Run with:

    python benchmarks/bench_kernels.py [--repeats 200]

Backend selection for the package itself is via QNS_KERNEL_BACKEND
(auto | numba | numpy); this script calls both implementations directly.
"""

import argparse
import time

import numpy as np

from qns import kernels
from qns.lattice import build_lattice, sample_disorder
from qns.statevec import HamiltonianOp


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lattice(rows, cols, repeats):
    lat = build_lattice(rows, cols, coupling_mhz=2.185)
    n = lat.num_qubits
    h = HamiltonianOp.from_lattice(lat, sample_disorder(lat, 30.0, 1))
    rng = np.random.default_rng(0)
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    psi /= np.linalg.norm(psi)
    out = np.empty_like(psi)
    u = (0.8 + 0j, -0.6j * np.exp(-0.4j), -0.6j * np.exp(0.4j), 0.8 + 0j)

    rows_out = []
    variants = [("numpy", kernels._ham_apply_numpy, kernels._rotation_apply_numpy)]
    if kernels._HAVE_NUMBA:
        variants.append(("numba", kernels._ham_apply_numba, kernels._rotation_apply_numba))
    for name, ham, rot in variants:
        ham(h._diag, h._idx_up, h._idx_dn, h._weights, psi, out)  # warm up / JIT
        rot(psi.copy(), 1 << (n // 2), *u)
        t_ham = timeit(
            lambda: ham(h._diag, h._idx_up, h._idx_dn, h._weights, psi, out), repeats
        )
        t_rot = timeit(lambda: rot(psi, 1 << (n // 2), *u), repeats)
        rows_out.append((name, t_ham, t_rot))
    return n, rows_out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    print(f"active package backend: {kernels.backend_name()}")
    print(f"{'qubits':>7} {'backend':>8} {'H@psi':>12} {'rotation':>12}")
    for rows, cols in ((2, 2), (3, 3), (3, 4), (4, 4)):
        n, results = bench_lattice(rows, cols, args.repeats)
        for name, t_ham, t_rot in results:
            print(f"{n:>7} {name:>8} {t_ham * 1e6:>10.1f}us {t_rot * 1e6:>10.1f}us")
        if len(results) == 2:
            speedup = results[0][1] / results[1][1]
            print(f"{'':>7} {'speedup':>8} {speedup:>11.1f}x")


if __name__ == "__main__":
    main()
