"""Lattice geometry, couplings, disorder sampling, and the Neel pattern.

A lattice is a rows x cols grid with an optional active-site mask.  Active
sites are indexed 0..N_q-1 in row-major order; basis-state bit ``i`` of the
state-vector engine corresponds to active qubit ``i``.  Couplings exist
between grid-adjacent (4-neighborhood) active sites only.

All frequencies in the public API are ordinary frequencies in MHz (the
``g/2pi`` convention); conversion to angular rad/ns happens inside the
state-vector engine.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from qns.seeding import rng_for

Edge = tuple[int, int]


@dataclass(frozen=True)
class LatticeSpec:
    """Validated grid of qubits with couplings and a readout choice.

    Immutable after construction and safe to share across threads.  Use
    :func:`build_lattice` instead of constructing directly.
    """

    rows: int
    cols: int
    active_mask: tuple  # bool per grid site, row-major, length rows*cols
    coupling_mhz: float
    coupling_overrides: tuple  # sorted ((i, j), mhz) pairs, active-qubit ids
    readout_index: int

    @property
    def num_qubits(self) -> int:
        return sum(self.active_mask)

    @property
    def active_sites(self) -> tuple:
        """Row-major grid indices of active sites; position = qubit index."""
        return tuple(s for s, a in enumerate(self.active_mask) if a)

    @property
    def coords(self) -> tuple:
        """(row, col) per active qubit."""
        return tuple((s // self.cols, s % self.cols) for s in self.active_sites)

    def site_to_qubit(self, site: int) -> int:
        """Active-qubit index of a row-major grid site (-1 if inactive)."""
        if not self.active_mask[site]:
            return -1
        return sum(1 for s in self.active_sites if s < site)

    @property
    def override_map(self) -> dict:
        return {pair: g for pair, g in self.coupling_overrides}


@dataclass(frozen=True)
class DisorderProfile:
    """Per-qubit detunings d_i/2pi in MHz, uniform on [-bound, bound]."""

    detunings_mhz: np.ndarray
    bound_mhz: float
    seed: int

    def __post_init__(self):
        det = np.asarray(self.detunings_mhz, dtype=float)
        det.flags.writeable = False
        object.__setattr__(self, "detunings_mhz", det)
        if np.any(np.abs(det) > self.bound_mhz + 1e-12):
            raise ValueError("detuning exceeds the disorder bound")


def build_lattice(
    rows: int,
    cols: int,
    active_mask=None,
    coupling_mhz: float = 2.185,
    readout_index: int | None = None,
    coupling_overrides: dict | None = None,
) -> LatticeSpec:
    """Construct and validate a lattice.

    ``active_mask`` is a row-major boolean sequence (default: all sites
    active).  ``coupling_overrides`` maps active-qubit index pairs (i, j)
    to a per-edge coupling in MHz.  When ``readout_index`` is omitted the
    active site closest to the grid center is chosen.
    """
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError("grid must contain at least 2 sites")
    if active_mask is None:
        mask = (True,) * (rows * cols)
    else:
        mask = tuple(bool(x) for x in active_mask)
        if len(mask) != rows * cols:
            raise ValueError(
                f"active_mask length {len(mask)} != rows*cols {rows * cols}"
            )
    n_active = sum(mask)
    if n_active < 2:
        raise ValueError("at least 2 active sites required")
    if not (np.isfinite(coupling_mhz) and coupling_mhz > 0):
        raise ValueError("coupling must be finite and > 0")

    _check_connected(rows, cols, mask)

    lattice = LatticeSpec(
        rows=rows,
        cols=cols,
        active_mask=mask,
        coupling_mhz=float(coupling_mhz),
        coupling_overrides=(),
        readout_index=0,
    )
    edge_set = {(i, j) for i, j, _ in edges(lattice)}
    overrides = ()
    if coupling_overrides:
        items = []
        for pair, g in sorted(coupling_overrides.items()):
            i, j = min(pair), max(pair)
            if (i, j) not in edge_set:
                raise ValueError(f"coupling override on non-edge pair {(i, j)}")
            if not (np.isfinite(g) and g > 0):
                raise ValueError(f"coupling override for {(i, j)} must be > 0")
            items.append(((i, j), float(g)))
        overrides = tuple(items)
        lattice = LatticeSpec(
            rows, cols, mask, float(coupling_mhz), overrides, 0
        )

    if readout_index is None:
        readout = default_readout(lattice)
    else:
        readout = int(readout_index)
        if not 0 <= readout < n_active:
            raise ValueError(
                f"readout_index {readout} out of range for {n_active} active qubits"
            )
    return LatticeSpec(rows, cols, mask, float(coupling_mhz), overrides, readout)


def _check_connected(rows, cols, mask):
    """BFS over the 4-neighborhood restricted to active sites."""
    active = [s for s in range(rows * cols) if mask[s]]
    seen = {active[0]}
    frontier = [active[0]]
    while frontier:
        s = frontier.pop()
        r, c = divmod(s, cols)
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < rows and 0 <= cc < cols:
                t = rr * cols + cc
                if mask[t] and t not in seen:
                    seen.add(t)
                    frontier.append(t)
    if len(seen) != len(active):
        raise ValueError("active sites do not form a connected subgraph")


def default_readout(lattice: LatticeSpec) -> int:
    """Active qubit closest to the grid's geometric center.

    Ties are broken by the lowest row-major site index, so on even-sized
    grids the upper-left of the central sites wins.
    """
    rc = (lattice.rows - 1) / 2.0
    cc = (lattice.cols - 1) / 2.0
    best = min(
        range(lattice.num_qubits),
        key=lambda q: (
            (lattice.coords[q][0] - rc) ** 2 + (lattice.coords[q][1] - cc) ** 2,
            lattice.active_sites[q],
        ),
    )
    return best


def neel_pattern(lattice: LatticeSpec) -> int:
    """Bitmask of the initially excited checkerboard sublattice.

    Bit i is set iff active qubit i sits on a (row+col)-even site.  This
    sublattice is the "even" side of the imbalance order parameter.
    """
    mask = 0
    for q, (r, c) in enumerate(lattice.coords):
        if (r + c) % 2 == 0:
            mask |= 1 << q
    return mask


def sample_disorder(lattice: LatticeSpec, h_mhz: float, seed: int) -> DisorderProfile:
    """N_q i.i.d. uniform detunings on [-h, h] MHz, reproducible from seed."""
    if h_mhz < 0:
        raise ValueError("disorder bound h must be >= 0")
    rng = rng_for(seed, "disorder")
    det = rng.uniform(-h_mhz, h_mhz, size=lattice.num_qubits)
    if h_mhz == 0:
        det = np.zeros(lattice.num_qubits)
    return DisorderProfile(detunings_mhz=det, bound_mhz=float(h_mhz), seed=int(seed))


def edges(lattice: LatticeSpec):
    """Edges (i, j, g_ij_mhz) with i < j, one entry per grid-adjacent pair."""
    overrides = lattice.override_map
    out = []
    site_of = lattice.active_sites
    qubit_of = {s: q for q, s in enumerate(site_of)}
    for q, s in enumerate(site_of):
        r, c = divmod(s, lattice.cols)
        # right and down neighbors only: each pair appears once
        for rr, cc in ((r, c + 1), (r + 1, c)):
            if 0 <= rr < lattice.rows and 0 <= cc < lattice.cols:
                t = rr * lattice.cols + cc
                if lattice.active_mask[t]:
                    p = qubit_of[t]
                    i, j = min(q, p), max(q, p)
                    out.append((i, j, overrides.get((i, j), lattice.coupling_mhz)))
    out.sort(key=lambda e: (e[0], e[1]))
    return out


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

_PRESET_KEYS = {"rows", "cols", "inactive_sites", "coupling_mhz", "readout_index"}


def load_lattice_preset(path) -> LatticeSpec:
    """Load a lattice from a JSON preset file.

    Keys: ``rows``, ``cols``, ``inactive_sites`` (row-major grid indices,
    optional), ``coupling_mhz`` (optional, default 2.185), ``readout_index``
    (optional).  Unknown keys are a hard error.
    """
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - _PRESET_KEYS
    if unknown:
        raise ValueError(f"unknown lattice preset key(s): {sorted(unknown)}")
    if "rows" not in data or "cols" not in data:
        raise ValueError("lattice preset requires 'rows' and 'cols'")
    rows, cols = int(data["rows"]), int(data["cols"])
    mask = None
    if data.get("inactive_sites"):
        mask = [True] * (rows * cols)
        for s in data["inactive_sites"]:
            s = int(s)
            if not 0 <= s < rows * cols:
                raise ValueError(f"inactive site {s} outside the grid")
            mask[s] = False
    return build_lattice(
        rows,
        cols,
        active_mask=mask,
        coupling_mhz=float(data.get("coupling_mhz", 2.185)),
        readout_index=data.get("readout_index"),
    )
