"""Reproducible end-to-end experiment pipelines.

Each pipeline derives every random stream from one master seed, assembles
results in deterministic index order, and returns a result object carrying
plot-ready curves plus summary metrics.  Re-running with the same inputs
reproduces every number bit-exactly regardless of thread count.
"""

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from qns.lattice import LatticeSpec, neel_pattern, sample_disorder
from qns.parallel import parallel_map
from qns.qnn import (
    LabeledSample,
    SamplePipeline,
    TrainedModel,
    TrainingConfig,
    accuracy,
    calibrate_threshold,
    classify,
    init_search,
    qnn_forward,
    realize_sample,
    train,
)
from qns.seeding import derive_seed, rng_for
from qns.statevec import (
    HamiltonianOp,
    basis_distribution,
    evolve,
    imbalance,
    neel_state,
    overlap_fidelity,
)


# ---------------------------------------------------------------------------
# measurement noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Readout confusion plus optional shot sampling.

    ``f00``/``f11`` are the probabilities of reading 0 (1) given state
    0 (1); ``shots = 0`` returns exact biased probabilities.
    """

    f00: float = 0.971
    f11: float = 0.937
    shots: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (0.5 < self.f00 <= 1.0 and 0.5 < self.f11 <= 1.0):
            raise ValueError("readout fidelities must lie in (0.5, 1]")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")


def apply_readout_noise(p: float, noise: NoiseModel, rng=None) -> float:
    """Observed excitation probability under the confusion matrix.

    p_meas = p*f11 + (1-p)*(1-f00); with shots > 0 a seeded binomial
    estimate of p_meas is returned instead of the exact value.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("probability must lie in [0, 1]")
    p_meas = p * noise.f11 + (1.0 - p) * (1.0 - noise.f00)
    if noise.shots == 0:
        return float(p_meas)
    if rng is None:
        rng = rng_for(noise.seed, "readout-shots")
    return float(rng.binomial(noise.shots, p_meas) / noise.shots)


def noise_transform(noise: NoiseModel | None, seed: int):
    """Vectorized probability transform for a SamplePipeline (None = exact)."""
    if noise is None:
        return None
    rng = rng_for(seed, "noise", noise.seed)

    def transform(probs):
        return np.array([apply_readout_noise(float(p), noise, rng) for p in probs])

    return transform


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass
class ExperimentRecord:
    """Run descriptor: config snapshot, seed, emitted curves, metrics."""

    kind: str
    config: dict
    master_seed: int
    metrics: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)  # name -> {"columns", "rows"}
    duration_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _curve(columns, rows) -> dict:
    return {"columns": list(columns), "rows": [list(r) for r in rows]}


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def generate_dataset(
    lattice: LatticeSpec,
    n_per_class: int,
    h_erg_mhz: float,
    h_loc_mhz: float,
    t_state_ns: float,
    seed: int,
    decoupled: tuple = (),
) -> list:
    """Labeled recipes: Neel state quenched at the class's disorder bound.

    Ergodic samples (label 1) come first, then localized (label 0); each
    carries its own derived disorder seed.
    """
    if n_per_class < 1:
        raise ValueError("need at least one sample per class")
    samples = []
    for i in range(n_per_class):
        samples.append(
            LabeledSample(1, h_erg_mhz, derive_seed(seed, "ergodic", i), t_state_ns, decoupled)
        )
    for i in range(n_per_class):
        samples.append(
            LabeledSample(0, h_loc_mhz, derive_seed(seed, "localized", i), t_state_ns, decoupled)
        )
    return samples


# ---------------------------------------------------------------------------
# imbalance dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImbalanceResult:
    time_ns: np.ndarray
    i_mean: np.ndarray
    i_std: np.ndarray
    realizations: int
    i_mean_200: float  # quasi-steady-state value

    def columns(self):
        return ["t_ns", "I_mean", "I_std", "realizations"]

    def rows(self):
        return [
            [float(t), float(m), float(s), self.realizations]
            for t, m, s in zip(self.time_ns, self.i_mean, self.i_std)
        ]


def run_imbalance_dynamics(
    lattice: LatticeSpec,
    h_mhz: float,
    time_grid_ns,
    realizations: int,
    seed: int,
    threads: int = 1,
    evolve_tol: float = 1e-10,
) -> ImbalanceResult:
    """Mean sublattice imbalance I(t) over disorder realizations.

    Each realization quenches the Neel state under its own disorder draw
    and walks the (ascending) time grid incrementally.  The 200 ns value
    is always computed, whether or not it is on the grid.
    """
    grid = np.asarray(time_grid_ns, dtype=float)
    if realizations < 1:
        raise ValueError("need at least one realization")
    if np.any(np.diff(grid) < 0) or np.any(grid < 0):
        raise ValueError("time grid must be ascending and nonnegative")
    times = np.unique(np.append(grid, 200.0))

    def one_realization(r):
        profile = sample_disorder(lattice, h_mhz, derive_seed(seed, "imbalance", r))
        h = HamiltonianOp.from_lattice(lattice, profile)
        psi = neel_state(lattice)
        t_prev = 0.0
        values = {}
        for t in times:
            psi = evolve(h, psi, t - t_prev, evolve_tol)
            t_prev = t
            values[t] = imbalance(psi, lattice)
        return values

    per_real = parallel_map(one_realization, range(realizations), threads)
    curve = np.array([[vals[t] for t in grid] for vals in per_real])
    at_200 = float(np.mean([vals[200.0] for vals in per_real]))
    return ImbalanceResult(
        time_ns=grid,
        i_mean=curve.mean(axis=0),
        i_std=curve.std(axis=0),
        realizations=realizations,
        i_mean_200=at_200,
    )


# ---------------------------------------------------------------------------
# classification experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassificationConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    n_train_per_class: int = 10
    n_test_per_class: int = 25
    n_init_per_class: int = 50
    n_init_candidates: int = 50
    h_erg_mhz: float = 1.0
    h_loc_mhz: float = 50.0
    t_state_ns: float = 200.0
    noise: NoiseModel | None = None
    decoupled_prep: tuple = ()
    retrain_times_ns: tuple = (100.0, 200.0, 300.0, 400.0)
    retrain_instances: int = 1


@dataclass
class ClassificationOutcome:
    model: TrainedModel
    record: ExperimentRecord
    test_probs: np.ndarray
    test_labels: np.ndarray


def _gaussian_fit(probs, labels) -> dict:
    out = {}
    for cls, name in ((0, "localized"), (1, "ergodic")):
        vals = probs[labels == cls]
        out[f"{name}_mean"] = float(vals.mean())
        out[f"{name}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return out


def run_classification_experiment(
    lattice: LatticeSpec, config: ClassificationConfig
) -> ClassificationOutcome:
    """Datasets -> init search -> training -> test-set statistics."""
    t_start = time.perf_counter()
    tc = config.training
    seed = tc.seed
    t0 = tc.t0_ns

    def dataset(label, n):
        return generate_dataset(
            lattice,
            n,
            config.h_erg_mhz,
            config.h_loc_mhz,
            config.t_state_ns,
            derive_seed(seed, label),
            config.decoupled_prep,
        )

    def pipeline(samples, noise_label):
        return SamplePipeline.from_samples(
            lattice,
            samples,
            t0,
            tc.weight_ergodic,
            tc.weight_localized,
            tc.evolve_tol,
            noise_transform(config.noise, derive_seed(seed, noise_label)),
        )

    train_pipe = pipeline(dataset("train-set", config.n_train_per_class), "train-noise")
    test_pipe = pipeline(dataset("test-set", config.n_test_per_class), "test-noise")
    init_pipe = pipeline(dataset("init-set", config.n_init_per_class), "init-noise")

    search = init_search(
        lattice,
        init_pipe,
        config.n_init_candidates,
        derive_seed(seed, "init-search"),
        tc.layers,
    )
    model = train(lattice, train_pipe, test_pipe, tc, initial_params=search.best)

    test_probs = test_pipe.probabilities(model.params)
    test_labels = test_pipe.labels
    acc_default = accuracy(test_probs, test_labels, tc.threshold)
    acc_calibrated = accuracy(test_probs, test_labels, model.threshold)

    record = ExperimentRecord(
        kind="classification",
        config=_config_dict(lattice, config),
        master_seed=seed,
        metrics={
            "test_accuracy": acc_default,
            "test_accuracy_calibrated": acc_calibrated,
            "calibrated_threshold": float(model.threshold),
            "final_train_loss": model.history[-1].loss,
            "init_search_best_loss": float(search.losses.min()),
            **_gaussian_fit(test_probs, test_labels),
        },
        curves={
            "history": _curve(
                ["epoch", "loss", "train_acc", "test_acc"],
                [
                    [e, h.loss, h.train_accuracy, h.test_accuracy]
                    for e, h in enumerate(model.history)
                ],
            ),
            "test_probabilities": _curve(
                ["sample", "label", "p"],
                [[i, int(y), float(p)] for i, (y, p) in enumerate(zip(test_labels, test_probs))],
            ),
            "init_candidates": _curve(
                ["candidate", "loss", "accuracy"],
                [
                    [c, float(l), float(a)]
                    for c, (l, a) in enumerate(zip(search.losses, search.accuracies))
                ],
            ),
        },
        duration_s=time.perf_counter() - t_start,
    )
    return ClassificationOutcome(model, record, test_probs, test_labels)


def run_probe_experiment(lattice: LatticeSpec, config: ClassificationConfig) -> ClassificationOutcome:
    """Probe-qubit variant: the readout qubit sits out the state quench.

    State preparation couples only the other qubits (the probe's couplings
    are removed and it stays in |0>); the circuit then runs on the full
    lattice with the probe as readout.  The headline accuracy uses the
    threshold calibrated on the training set, which compensates the class
    imbalance this readout develops.
    """
    if (lattice.rows, lattice.cols) != (3, 3) or lattice.num_qubits != 9:
        raise ValueError("probe experiment is defined on the full 3x3 lattice")
    probe_config = replace(config, decoupled_prep=(lattice.readout_index,))
    outcome = run_classification_experiment(lattice, probe_config)
    outcome.record.kind = "probe"
    outcome.record.metrics["probe_qubit"] = lattice.readout_index
    return outcome


def _config_dict(lattice: LatticeSpec, config: ClassificationConfig) -> dict:
    return {
        "lattice": {
            "rows": lattice.rows,
            "cols": lattice.cols,
            "inactive_sites": [
                s for s, a in enumerate(lattice.active_mask) if not a
            ],
            "coupling_mhz": lattice.coupling_mhz,
            "readout_index": lattice.readout_index,
        },
        "classification": {
            **{
                k: v
                for k, v in asdict(config).items()
                if k not in ("training", "noise")
            },
            "training": asdict(config.training),
            "noise": None if config.noise is None else asdict(config.noise),
        },
    }


# ---------------------------------------------------------------------------
# generalization sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisorderSweepResult:
    h_over_g: np.ndarray
    p_localized: np.ndarray
    profiles: int

    def columns(self):
        return ["h_over_g", "p_localized", "profiles"]

    def rows(self):
        return [
            [float(h), float(p), self.profiles]
            for h, p in zip(self.h_over_g, self.p_localized)
        ]


def run_disorder_sweep(
    model: TrainedModel,
    lattice: LatticeSpec,
    h_over_g_grid,
    profiles_per_point: int,
    seed: int,
    t_state_ns: float = 200.0,
    noise: NoiseModel | None = None,
    threads: int = 1,
) -> DisorderSweepResult:
    """Fraction of fresh disorder profiles classified localized per h/g.

    Classification uses the model's calibrated threshold.
    """
    grid = np.asarray(h_over_g_grid, dtype=float)
    if profiles_per_point < 1:
        raise ValueError("need at least one profile per point")
    g = lattice.coupling_mhz
    tc = model.config

    def one_point(point):
        # per-point noise stream keeps the sweep thread-count independent
        transform = noise_transform(noise, derive_seed(seed, "sweep-noise", point))
        n_loc = 0
        for j in range(profiles_per_point):
            sample = LabeledSample(
                label=0,
                h_mhz=grid[point] * g,
                disorder_seed=derive_seed(seed, "disorder-sweep", point, j),
                t_state_ns=t_state_ns,
            )
            state = realize_sample(lattice, sample, tc.evolve_tol)
            p = qnn_forward(state, model.params, lattice, tc.t0_ns, tc.evolve_tol)
            if transform is not None:
                p = float(transform(np.array([p]))[0])
            n_loc += 1 - classify(p, model.threshold)
        return n_loc / profiles_per_point

    fractions = parallel_map(one_point, range(grid.shape[0]), threads)
    return DisorderSweepResult(grid, np.array(fractions), profiles_per_point)


@dataclass(frozen=True)
class TimeSweepResult:
    time_ns: np.ndarray
    p_mean_ergodic: np.ndarray
    p_mean_localized: np.ndarray
    frac_localized_ergodic: np.ndarray
    frac_localized_localized: np.ndarray
    samples_per_class: int
    retrain_times_ns: np.ndarray
    retrain_accuracy: np.ndarray

    def columns(self):
        return [
            "t_ns",
            "p_mean_ergodic",
            "p_mean_localized",
            "p_gap",
            "frac_localized_ergodic",
            "frac_localized_localized",
            "samples_per_class",
        ]

    def rows(self):
        return [
            [
                float(t),
                float(pe),
                float(pl),
                float(pe - pl),
                float(fe),
                float(fl),
                self.samples_per_class,
            ]
            for t, pe, pl, fe, fl in zip(
                self.time_ns,
                self.p_mean_ergodic,
                self.p_mean_localized,
                self.frac_localized_ergodic,
                self.frac_localized_localized,
            )
        ]

    def retrain_columns(self):
        return ["t_state_ns", "test_accuracy"]

    def retrain_rows(self):
        return [
            [float(t), float(a)]
            for t, a in zip(self.retrain_times_ns, self.retrain_accuracy)
        ]


def run_time_sweep(
    model: TrainedModel,
    lattice: LatticeSpec,
    t_grid_ns,
    config: ClassificationConfig,
    seed: int | None = None,
    threads: int = 1,
) -> TimeSweepResult:
    """Apply a trained model to states prepared at other quench times, and
    separately retrain from scratch at each listed preparation time.

    Part 1 classifies ``n_test_per_class`` fresh states per class at every
    grid time with the trained model (calibrated threshold).  Part 2 runs
    the full pipeline (init search included) at each retrain time,
    ``retrain_instances`` times with independent seeds, and reports the
    mean test accuracy at the per-instance calibrated threshold (long
    quenches shift both class distributions away from 0.5, so the fixed
    default threshold misreads models whose classes are in fact separated).
    """
    grid = np.asarray(t_grid_ns, dtype=float)
    seed = model.config.seed if seed is None else seed
    tc = model.config
    n = config.n_test_per_class

    def one_time(point):
        transform = noise_transform(config.noise, derive_seed(seed, "time-noise", point))
        probs = {0: [], 1: []}
        for label, h in ((1, config.h_erg_mhz), (0, config.h_loc_mhz)):
            for j in range(n):
                sample = LabeledSample(
                    label=label,
                    h_mhz=h,
                    disorder_seed=derive_seed(seed, "time-sweep", point, label, j),
                    t_state_ns=float(grid[point]),
                )
                state = realize_sample(lattice, sample, tc.evolve_tol)
                p = qnn_forward(state, model.params, lattice, tc.t0_ns, tc.evolve_tol)
                if transform is not None:
                    p = float(transform(np.array([p]))[0])
                probs[label].append(p)
        p_erg = np.array(probs[1])
        p_loc = np.array(probs[0])
        return (
            float(p_erg.mean()),
            float(p_loc.mean()),
            float(np.mean([1 - classify(p, model.threshold) for p in p_erg])),
            float(np.mean([1 - classify(p, model.threshold) for p in p_loc])),
        )

    stats = parallel_map(one_time, range(grid.shape[0]), threads)
    p_mean_erg, p_mean_loc, frac_erg, frac_loc = (np.array(x) for x in zip(*stats))

    retrain_times = np.asarray(config.retrain_times_ns, dtype=float)
    retrain_acc = []
    for t_state in retrain_times:
        instance_acc = []
        for inst in range(config.retrain_instances):
            sub_config = replace(
                config,
                t_state_ns=float(t_state),
                training=replace(tc, seed=derive_seed(seed, "retrain", t_state, inst)),
            )
            outcome = run_classification_experiment(lattice, sub_config)
            instance_acc.append(outcome.record.metrics["test_accuracy_calibrated"])
        retrain_acc.append(float(np.mean(instance_acc)))

    return TimeSweepResult(
        time_ns=grid,
        p_mean_ergodic=p_mean_erg,
        p_mean_localized=p_mean_loc,
        frac_localized_ergodic=frac_erg,
        frac_localized_localized=frac_loc,
        samples_per_class=n,
        retrain_times_ns=retrain_times,
        retrain_accuracy=np.array(retrain_acc),
    )


# ---------------------------------------------------------------------------
# ramping study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RampingResult:
    ramp_ns: np.ndarray
    fidelity: np.ndarray

    def columns(self):
        return ["t_ramp_ns", "fidelity"]

    def rows(self):
        return [[float(t), float(f)] for t, f in zip(self.ramp_ns, self.fidelity)]


def run_ramping_study(
    lattice: LatticeSpec,
    ramp_grid_ns,
    hold_ns: float = 200.0,
    idle_offsets_mhz=None,
    max_step_ns: float = 0.5,
    evolve_tol: float = 1e-10,
) -> RampingResult:
    """Fidelity cost of finite detuning ramps around the interaction stage.

    Detunings follow a piecewise-linear envelope: from the idle offsets to
    zero over the ramp time, a constant stage of ``hold_ns``, and back.
    The time-dependent evolution is integrated as piecewise-constant steps
    no longer than ``max_step_ns`` (midpoint detunings).  Fidelity is the
    squared statistical overlap of the final basis distribution against the
    instant-ramp reference.  Idle offsets default to a +/-100 MHz
    checkerboard.
    """
    grid = np.asarray(ramp_grid_ns, dtype=float)
    if np.any(grid < 0):
        raise ValueError("ramp times must be >= 0")
    n = lattice.num_qubits
    if idle_offsets_mhz is None:
        pattern = neel_pattern(lattice)
        idle = np.array([100.0 if (pattern >> q) & 1 else -100.0 for q in range(n)])
    else:
        idle = np.asarray(idle_offsets_mhz, dtype=float)
        if idle.shape != (n,):
            raise ValueError("idle offsets length must equal the qubit count")

    h_target = HamiltonianOp.from_lattice(lattice)
    psi0 = neel_state(lattice)
    reference = basis_distribution(evolve(h_target, psi0, hold_ns, evolve_tol))

    def ramp_stage(psi, t_ramp, downward):
        n_steps = int(np.ceil(t_ramp / max_step_ns))
        dt = t_ramp / n_steps
        for s in range(n_steps):
            frac = (s + 0.5) / n_steps
            if downward:
                det = idle * frac
            else:
                det = idle * (1.0 - frac)
            psi = evolve(HamiltonianOp.from_lattice(lattice, det), psi, dt, evolve_tol)
        return psi

    fidelities = []
    for t_ramp in grid:
        psi = psi0.copy()
        if t_ramp > 0:
            psi = ramp_stage(psi, t_ramp, downward=False)
        psi = evolve(h_target, psi, hold_ns, evolve_tol)
        if t_ramp > 0:
            psi = ramp_stage(psi, t_ramp, downward=True)
        fidelities.append(overlap_fidelity(basis_distribution(psi), reference))
    return RampingResult(grid, np.array(fidelities))
