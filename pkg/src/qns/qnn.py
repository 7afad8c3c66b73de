"""Digital-analog variational classifier trained from a single readout qubit.

The circuit alternates a digital layer of trainable single-qubit rotations
R(theta, phi) = Z(theta) X(phi) Z(-theta) on every qubit with an analog
block exp(-i H_0 t0) under the clean (zero-disorder) coupling Hamiltonian;
a final rotation acts on the readout qubit alone, whose excitation
probability is the classifier output.  With N_l digital layers the model
carries 2 (N_q N_l + 1) parameters.

Gradient modes
--------------
- ``chain-shift``: two-point pi/2 shift applied to the readout probability
  (exact for every phi, whose generator squares to the identity), chained
  with the analytic loss derivative; theta parameters use central finite
  differences of the probability, since the conjugation angle enters the
  probability with two harmonics and the two-point rule is not exact there.
- ``paper-shift``: the pi/2 two-point rule applied verbatim to the loss
  itself for every parameter.
- ``finite-difference``: central differences of the loss (truth oracle).
"""

import functools
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from qns.lattice import LatticeSpec, edges, neel_pattern, sample_disorder
from qns.seeding import derive_seed, rng_for
from qns.statevec import (
    HamiltonianOp,
    StateVector,
    apply_rotation,
    basis_state,
    evolve,
    excitation_probability,
)

PROB_CLIP = 1e-12
_DENSE_ANALOG_MAX_QUBITS = 11  # 2^11 x 2^11 propagator = 64 MiB


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QnnParams:
    """Rotation angles for the digital layers, flattened layer-major.

    ``theta[l * num_qubits + q]`` belongs to qubit q in layer l; the final
    slot ``theta[num_qubits * layers]`` is the readout qubit's last
    rotation.  ``phi`` is laid out identically.
    """

    num_qubits: int
    layers: int
    theta: np.ndarray
    phi: np.ndarray
    readout_index: int

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one digital layer")
        if not 0 <= self.readout_index < self.num_qubits:
            raise ValueError("readout index out of range")
        want = self.num_qubits * self.layers + 1
        theta = np.asarray(self.theta, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if theta.shape != (want,) or phi.shape != (want,):
            raise ValueError(
                f"expected {want} (theta, phi) pairs for "
                f"{self.num_qubits} qubits x {self.layers} layers"
            )
        theta.flags.writeable = False
        phi.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @property
    def param_count(self) -> int:
        return 2 * (self.num_qubits * self.layers + 1)

    def to_flat(self) -> np.ndarray:
        """[theta..., phi...] — the layout used by gradients and optimizers."""
        return np.concatenate([self.theta, self.phi])

    def with_flat(self, flat: np.ndarray) -> "QnnParams":
        half = flat.shape[0] // 2
        return replace(self, theta=flat[:half].copy(), phi=flat[half:].copy())


def random_params(
    lattice: LatticeSpec, seed: int, layers: int = 1, readout_index: int | None = None
) -> QnnParams:
    """Angles drawn uniformly from [0, 2pi) per parameter."""
    n = lattice.num_qubits
    rng = rng_for(seed, "params")
    size = n * layers + 1
    return QnnParams(
        num_qubits=n,
        layers=layers,
        theta=rng.uniform(0.0, 2.0 * np.pi, size),
        phi=rng.uniform(0.0, 2.0 * np.pi, size),
        readout_index=lattice.readout_index if readout_index is None else readout_index,
    )


# ---------------------------------------------------------------------------
# samples and state preparation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledSample:
    """Recipe for one input state; datasets store recipes, not amplitudes.

    label 1 = ergodic, 0 = localized.  ``decoupled`` lists qubits excluded
    from the preparation quench: their couplings are removed and their
    excitation cleared, which models parking a probe qubit far off
    resonance while the rest of the lattice scrambles.
    """

    label: int
    h_mhz: float
    disorder_seed: int
    t_state_ns: float
    decoupled: tuple = ()


def realize_sample(
    lattice: LatticeSpec, sample: LabeledSample, tol: float = 1e-10
) -> StateVector:
    """Prepare the sample's state: Neel pattern quenched under the
    disordered Hamiltonian for ``t_state_ns``."""
    profile = sample_disorder(lattice, sample.h_mhz, sample.disorder_seed)
    excitation = neel_pattern(lattice)
    edge_list = edges(lattice)
    if sample.decoupled:
        skip = set(sample.decoupled)
        excitation &= ~sum(1 << q for q in skip)
        edge_list = [(i, j, g) for i, j, g in edge_list if i not in skip and j not in skip]
    h = HamiltonianOp(lattice.num_qubits, edge_list, profile)
    state = basis_state(lattice, excitation)
    return evolve(h, state, sample.t_state_ns, tol)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------


class AnalogBlock:
    """exp(-i H_0 t) reused across circuit evaluations.

    Small systems precompute the dense propagator once (an eigendecomposition
    of the clean Hamiltonian); larger ones fall back to Lanczos per call.
    """

    def __init__(self, lattice: LatticeSpec, t_ns: float, tol: float = 1e-10):
        self.lattice = lattice
        self.t_ns = float(t_ns)
        self.tol = tol
        self.h0 = HamiltonianOp.from_lattice(lattice)
        self._u = None
        if lattice.num_qubits <= _DENSE_ANALOG_MAX_QUBITS:
            evals, evecs = np.linalg.eigh(self.h0.dense())
            self._u = (evecs * np.exp(-1j * self.t_ns * evals)) @ evecs.T

    def apply(self, state: StateVector) -> StateVector:
        if self._u is not None:
            state.amplitudes[:] = self._u @ state.amplitudes
            return state
        out = evolve(self.h0, state, self.t_ns, self.tol)
        state.amplitudes[:] = out.amplitudes
        return state


@functools.lru_cache(maxsize=32)
def analog_block(lattice: LatticeSpec, t_ns: float, tol: float = 1e-10) -> AnalogBlock:
    return AnalogBlock(lattice, t_ns, tol)


def qnn_forward(
    input_state: StateVector,
    params: QnnParams,
    lattice: LatticeSpec,
    t0_ns: float,
    evolve_tol: float = 1e-10,
) -> float:
    """Exact readout-qubit excitation probability of the circuit (no shots)."""
    n = lattice.num_qubits
    if params.num_qubits != n:
        raise ValueError("parameter set does not match the lattice size")
    if input_state.num_qubits != n:
        raise ValueError("input state does not match the lattice size")
    block = analog_block(lattice, float(t0_ns), evolve_tol)
    psi = input_state.copy()
    for layer in range(params.layers):
        base = layer * n
        for q in range(n):
            apply_rotation(psi, q, params.theta[base + q], params.phi[base + q])
        block.apply(psi)
    last = n * params.layers
    apply_rotation(psi, params.readout_index, params.theta[last], params.phi[last])
    return excitation_probability(psi, params.readout_index)


# ---------------------------------------------------------------------------
# loss and classification
# ---------------------------------------------------------------------------


def bce_loss(probs, labels, weights) -> float:
    """Weighted binary cross-entropy, probabilities clipped to [1e-12, 1-1e-12]."""
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not (p.shape == y.shape == w.shape):
        raise ValueError("probs, labels, weights must have equal lengths")
    p = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    terms = y * w * np.log(p) + (1.0 - y) * w * np.log(1.0 - p)
    return float(-np.mean(terms))


def classify(p: float, threshold: float) -> int:
    """0 (localized) below the threshold, 1 (ergodic) at or above it."""
    return 0 if p < threshold else 1


def accuracy(probs, labels, threshold: float) -> float:
    predicted = np.array([classify(float(p), threshold) for p in np.asarray(probs)])
    return float(np.mean(predicted == np.asarray(labels)))


def calibrate_threshold(train_probs, train_labels) -> float:
    """Decision threshold from per-class Gaussian fits.

    Fits a Gaussian to each class's readout probabilities by sample mean
    and stdev and returns the density intersection lying between the class
    means; degenerate cases (equal or zero stdevs, no bracketed root) fall
    back to the midpoint of the means.
    """
    p = np.asarray(train_probs, dtype=float)
    y = np.asarray(train_labels)
    p0 = p[y == 0]
    p1 = p[y == 1]
    if p0.size == 0 or p1.size == 0:
        raise ValueError("threshold calibration needs both classes")
    m0, m1 = float(p0.mean()), float(p1.mean())
    s0 = float(p0.std(ddof=1)) if p0.size > 1 else 0.0
    s1 = float(p1.std(ddof=1)) if p1.size > 1 else 0.0
    midpoint = 0.5 * (m0 + m1)
    if s0 < 1e-12 or s1 < 1e-12:
        return midpoint
    if abs(s0 - s1) < 1e-12:
        return midpoint
    a = 1.0 / s0**2 - 1.0 / s1**2
    b = -2.0 * (m0 / s0**2 - m1 / s1**2)
    c = m0**2 / s0**2 - m1**2 / s1**2 + 2.0 * np.log(s0 / s1)
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return midpoint
    lo, hi = min(m0, m1), max(m0, m1)
    roots = [(-b + np.sqrt(disc)) / (2 * a), (-b - np.sqrt(disc)) / (2 * a)]
    inside = [r for r in roots if lo < r < hi]
    if not inside:
        return midpoint
    return float(min(inside, key=lambda r: abs(r - midpoint)))


# ---------------------------------------------------------------------------
# batched evaluation
# ---------------------------------------------------------------------------


@dataclass
class SamplePipeline:
    """Prepared input states with labels and weights, evaluated as a batch.

    ``prob_transform`` (optional) maps the vector of exact probabilities to
    observed ones, e.g. a readout-noise model.  Evaluation is serial and in
    sample order, so repeated calls are bit-identical.
    """

    lattice: LatticeSpec
    states: list
    labels: np.ndarray
    weights: np.ndarray
    t0_ns: float
    evolve_tol: float = 1e-10
    prob_transform: object = None

    @classmethod
    def from_samples(
        cls,
        lattice: LatticeSpec,
        samples,
        t0_ns: float,
        weight_ergodic: float = 3.0,
        weight_localized: float = 1.0,
        evolve_tol: float = 1e-10,
        prob_transform=None,
    ) -> "SamplePipeline":
        states = [realize_sample(lattice, s, evolve_tol) for s in samples]
        labels = np.array([s.label for s in samples], dtype=int)
        weights = np.where(labels == 1, weight_ergodic, weight_localized).astype(float)
        return cls(lattice, states, labels, weights, t0_ns, evolve_tol, prob_transform)

    def __len__(self) -> int:
        return len(self.states)

    def probabilities(self, params: QnnParams) -> np.ndarray:
        probs = np.array(
            [
                qnn_forward(s, params, self.lattice, self.t0_ns, self.evolve_tol)
                for s in self.states
            ]
        )
        if self.prob_transform is not None:
            probs = np.asarray(self.prob_transform(probs), dtype=float)
        return probs

    def loss(self, params: QnnParams) -> float:
        return bce_loss(self.probabilities(params), self.labels, self.weights)

    def subset(self, index: int) -> "SamplePipeline":
        return SamplePipeline(
            self.lattice,
            [self.states[index]],
            self.labels[index : index + 1],
            self.weights[index : index + 1],
            self.t0_ns,
            self.evolve_tol,
            self.prob_transform,
        )


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def _shifted(params: QnnParams, coord: int, delta: float) -> QnnParams:
    flat = params.to_flat()
    flat[coord] += delta
    return params.with_flat(flat)


def gradient_shift(
    pipeline: SamplePipeline,
    params: QnnParams,
    mode: str = "chain-shift",
    fd_step: float = 1e-5,
) -> np.ndarray:
    """Loss gradient in the flat [theta..., phi...] layout."""
    dim = params.param_count
    half = dim // 2
    grad = np.zeros(dim)
    if mode == "paper-shift":
        for coord in range(dim):
            lp = pipeline.loss(_shifted(params, coord, +np.pi / 2))
            lm = pipeline.loss(_shifted(params, coord, -np.pi / 2))
            grad[coord] = 0.5 * (lp - lm)
        return grad
    if mode != "chain-shift":
        raise ValueError(f"unknown gradient mode {mode!r}")

    probs = np.clip(pipeline.probabilities(params), PROB_CLIP, 1.0 - PROB_CLIP)
    y = pipeline.labels
    w = pipeline.weights
    n = probs.shape[0]
    dloss_dp = w * (-y / probs + (1.0 - y) / (1.0 - probs)) / n
    for coord in range(dim):
        if coord < half:  # theta: probability is two-harmonic, use central FD
            pp = pipeline.probabilities(_shifted(params, coord, +fd_step))
            pm = pipeline.probabilities(_shifted(params, coord, -fd_step))
            dp = (pp - pm) / (2.0 * fd_step)
        else:  # phi: two-point pi/2 shift is exact on the probability
            pp = pipeline.probabilities(_shifted(params, coord, +np.pi / 2))
            pm = pipeline.probabilities(_shifted(params, coord, -np.pi / 2))
            dp = 0.5 * (pp - pm)
        grad[coord] = float(dloss_dp @ dp)
    return grad


def gradient_fd(pipeline: SamplePipeline, params: QnnParams, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the exact loss (truth oracle)."""
    if step <= 0:
        raise ValueError("finite-difference step must be > 0")
    dim = params.param_count
    grad = np.zeros(dim)
    for coord in range(dim):
        lp = pipeline.loss(_shifted(params, coord, +step))
        lm = pipeline.loss(_shifted(params, coord, -step))
        grad[coord] = (lp - lm) / (2.0 * step)
    return grad


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


class Adam:
    """Adaptive-moment gradient descent (beta1=0.9, beta2=0.999)."""

    def __init__(self, dim, lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    """Plain gradient descent."""

    def __init__(self, dim, lr=0.05):
        self.lr = lr

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return x - self.lr * grad


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 25
    optimizer: str = "adam"  # adam | sgd
    learning_rate: float = 0.05
    weight_ergodic: float = 3.0
    weight_localized: float = 1.0
    gradient_mode: str = "chain-shift"  # chain-shift | paper-shift | finite-difference
    t0_ns: float = 200.0
    batch_mode: str = "full-batch"  # full-batch | per-sample
    threshold: float = 0.5
    seed: int = 0
    layers: int = 1
    fd_step: float = 1e-5
    evolve_tol: float = 1e-10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.weight_ergodic <= 0 or self.weight_localized <= 0:
            raise ValueError("class weights must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.gradient_mode not in ("chain-shift", "paper-shift", "finite-difference"):
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")
        if self.batch_mode not in ("full-batch", "per-sample"):
            raise ValueError(f"unknown batch mode {self.batch_mode!r}")


@dataclass(frozen=True)
class EpochStats:
    loss: float
    train_accuracy: float
    test_accuracy: float


@dataclass
class TrainedModel:
    """Final parameters plus the calibrated threshold and training history."""

    params: QnnParams
    threshold: float
    history: list
    config: TrainingConfig


def _batch_gradient(pipeline, params, config):
    if config.gradient_mode == "finite-difference":
        return gradient_fd(pipeline, params, config.fd_step)
    return gradient_shift(pipeline, params, config.gradient_mode, config.fd_step)


def train(
    lattice: LatticeSpec,
    train_set,
    test_set,
    config: TrainingConfig,
    initial_params: QnnParams | None = None,
    prob_transform=None,
) -> TrainedModel:
    """Run the Forward / Backward / Testing loop for ``config.epochs`` epochs.

    ``train_set`` and ``test_set`` are LabeledSample lists (or prebuilt
    SamplePipelines).  Each epoch records the pre-update training loss and
    accuracy and the post-update test accuracy.  Fully deterministic given
    the config seed.
    """

    def as_pipeline(samples):
        if isinstance(samples, SamplePipeline):
            return samples
        return SamplePipeline.from_samples(
            lattice,
            samples,
            config.t0_ns,
            config.weight_ergodic,
            config.weight_localized,
            config.evolve_tol,
            prob_transform,
        )

    train_pipe = as_pipeline(train_set)
    test_pipe = as_pipeline(test_set)
    params = initial_params or random_params(lattice, config.seed, config.layers)
    if params.num_qubits != lattice.num_qubits or params.layers != config.layers:
        raise ValueError("initial parameters do not match lattice/config")

    optimizer = (
        Adam(params.param_count, lr=config.learning_rate)
        if config.optimizer == "adam"
        else Sgd(params.param_count, lr=config.learning_rate)
    )
    history = []
    for _ in range(config.epochs):
        # Forward
        probs = train_pipe.probabilities(params)
        loss = bce_loss(probs, train_pipe.labels, train_pipe.weights)
        train_acc = accuracy(probs, train_pipe.labels, config.threshold)
        # Backward
        flat = params.to_flat()
        if config.batch_mode == "full-batch":
            grad = _batch_gradient(train_pipe, params, config)
            flat = optimizer.step(flat, grad)
            params = params.with_flat(flat)
        else:
            for idx in range(len(train_pipe)):
                grad = _batch_gradient(train_pipe.subset(idx), params, config)
                flat = optimizer.step(params.to_flat(), grad)
                params = params.with_flat(flat)
        # Testing
        test_acc = accuracy(test_pipe.probabilities(params), test_pipe.labels, config.threshold)
        history.append(EpochStats(loss, train_acc, test_acc))

    final_train_probs = train_pipe.probabilities(params)
    threshold = calibrate_threshold(final_train_probs, train_pipe.labels)
    return TrainedModel(params=params, threshold=threshold, history=history, config=config)


# ---------------------------------------------------------------------------
# initialization search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitSearchResult:
    best: QnnParams
    losses: np.ndarray
    accuracies: np.ndarray


def init_search(
    lattice: LatticeSpec,
    pipeline: SamplePipeline,
    n_candidates: int = 50,
    seed: int = 0,
    layers: int = 1,
) -> InitSearchResult:
    """Pick the lowest-loss parameter set among random candidates.

    Candidates are uniform in [0, 2pi) per angle; each is scored on the
    pipeline (loss and 0.5-threshold accuracy are both recorded, loss
    decides).
    """
    if n_candidates < 1:
        raise ValueError("need at least one candidate")
    losses = np.empty(n_candidates)
    accs = np.empty(n_candidates)
    best = None
    best_idx = -1
    for c in range(n_candidates):
        candidate = random_params(lattice, derive_seed(seed, "candidate", c), layers)
        probs = pipeline.probabilities(candidate)
        losses[c] = bce_loss(probs, pipeline.labels, pipeline.weights)
        accs[c] = accuracy(probs, pipeline.labels, 0.5)
        if best is None or losses[c] < losses[best_idx]:
            best = candidate
            best_idx = c
    return InitSearchResult(best=best, losses=losses, accuracies=accs)


# ---------------------------------------------------------------------------
# model serialization (versioned JSON)
# ---------------------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "num_qubits": model.params.num_qubits,
        "layers": model.params.layers,
        "readout_index": model.params.readout_index,
        "theta": [float(x) for x in model.params.theta],
        "phi": [float(x) for x in model.params.phi],
        "threshold": float(model.threshold),
        "config": asdict(model.config),
        "history": [asdict(h) for h in model.history],
    }


def model_from_dict(data: dict) -> TrainedModel:
    if data.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {data.get('format_version')!r}")
    params = QnnParams(
        num_qubits=int(data["num_qubits"]),
        layers=int(data["layers"]),
        theta=np.array(data["theta"], dtype=float),
        phi=np.array(data["phi"], dtype=float),
        readout_index=int(data["readout_index"]),
    )
    history = [EpochStats(**h) for h in data["history"]]
    return TrainedModel(
        params=params,
        threshold=float(data["threshold"]),
        history=history,
        config=TrainingConfig(**data["config"]),
    )


def save_model(path, model: TrainedModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
