"""Deterministic seed derivation.

All randomness in the package flows from one master seed.  Subcomponents
(disorder realizations, dataset samples, parameter candidates, shot noise)
get their own streams by stable hashing of the master seed together with a
component label and an index, so results do not depend on evaluation order
or thread count.
"""

import hashlib

import numpy as np


def derive_seed(master: int, *parts) -> int:
    """Derive a 64-bit child seed from a master seed and label parts.

    The derivation is a SHA-256 hash of ``"master/part0/part1/..."``, so it
    is stable across platforms, Python versions, and process boundaries.
    """
    label = "/".join(str(p) for p in (master, *parts))
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master: int, *parts) -> np.random.Generator:
    """A fresh PCG64 generator seeded from :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(master, *parts))
