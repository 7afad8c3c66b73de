"""Deterministic work distribution for independent tasks.

Tasks carry their own derived seeds, and results are assembled in input
order, so the output of :func:`parallel_map` is identical for any worker
count.  Threads are effective here because the heavy work (BLAS
eigensolves, JIT kernels) releases the GIL.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count(requested: int | None = None) -> int:
    """Resolve a worker count: explicit argument, else QNS_THREADS, else 1."""
    if requested is not None and requested >= 1:
        return int(requested)
    env = os.environ.get("QNS_THREADS", "").strip()
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("QNS_THREADS must be >= 1")
        return n
    return 1


def parallel_map(fn, items, threads: int = 1) -> list:
    """Map ``fn`` over ``items``, preserving order; serial when threads <= 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
