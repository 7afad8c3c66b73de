"""Command-line entry point: ``qns <subcommand> [flags]``.

Subcommands: imbalance | level-stats | train | classify | sweep-disorder |
sweep-time | probe | ramping | dataset.  Every run resolves a full config
(file values overridden by flags, everything else defaulted), echoes it to
``<out>/config.json``, and writes a ``record.json`` plus one CSV per curve.

Exit codes: 0 success, 2 config error, 3 runtime error.  Errors print a
single line ``error: config: ...`` or ``error: runtime: ...`` to stderr.
Ranges use ``start:stop:count`` (linear) or ``log:start:stop:count``.
"""

import argparse
import copy
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from qns import experiments as xp
from qns.lattice import build_lattice, load_lattice_preset, neel_pattern
from qns.output import write_csv, write_json
from qns.parallel import thread_count
from qns.qnn import (
    TrainingConfig,
    classify as classify_p,
    load_model,
    qnn_forward,
    realize_sample,
    save_model,
)
from qns.seeding import derive_seed
from qns.spectral import mean_gap_ratio_sweep, neel_sector_count


class ConfigError(ValueError):
    """Invalid or unknown configuration; maps to exit code 2."""


EXPERIMENTS = (
    "imbalance",
    "level-stats",
    "train",
    "classify",
    "sweep-disorder",
    "sweep-time",
    "probe",
    "ramping",
    "dataset",
)

DEFAULTS = {
    "experiment": None,
    "seed": 12345,
    "threads": None,
    "out_dir": None,
    "lattice": {
        "rows": 3,
        "cols": 3,
        "inactive_sites": [],
        "coupling_mhz": 2.185,
        "readout_index": None,
        "preset": None,
    },
    "physics": {
        "h_erg_mhz": 1.0,
        "h_loc_mhz": 50.0,
        "t_state_ns": 200.0,
        "t0_ns": 200.0,
    },
    "training": {
        "epochs": 25,
        "optimizer": "adam",
        "learning_rate": 0.05,
        "gradient_mode": "chain-shift",
        "batch_mode": "full-batch",
        "threshold": 0.5,
        "weight_ergodic": 3.0,
        "weight_localized": 1.0,
        "layers": 1,
        "init_candidates": 50,
        "n_train_per_class": 10,
        "n_test_per_class": 25,
        "n_init_per_class": 50,
        "fd_step": 1e-5,
        "evolve_tol": 1e-10,
    },
    "noise": {
        "enabled": False,
        "f00": 0.971,
        "f11": 0.937,
        "shots": 0,
        "seed": 0,
    },
    "imbalance": {
        "h_mhz": 50.0,
        "time_grid": "0:400:41",
        "realizations": 50,
    },
    "level_stats": {
        "h_over_g": "0.5:18:20",
        "realizations": 200,
        "excitation_count": None,
        "middle_fraction": None,
    },
    "sweep_disorder": {
        "h_over_g": "0.46:18.3:20",
        "profiles": 50,
        "model": None,
    },
    "sweep_time": {
        "time_grid": "log:6:501:20",
        "retrain_times": [100.0, 200.0, 300.0, 400.0],
        "retrain_instances": 1,
        "model": None,
    },
    "classify": {
        "model": None,
        "n_per_class": 25,
    },
    "ramping": {
        "ramp_grid": "0:100:26",
        "hold_ns": 200.0,
        "idle_offset_mhz": 100.0,
    },
    "dataset": {
        "n_per_class": 25,
    },
}

# keys whose default is None, with the type they take when set
_NULLABLE = {
    "experiment": str,
    "threads": int,
    "out_dir": str,
    "lattice.readout_index": int,
    "lattice.preset": str,
    "level_stats.excitation_count": int,
    "level_stats.middle_fraction": float,
    "sweep_disorder.model": str,
    "sweep_time.model": str,
    "classify.model": str,
}


def parse_range(text: str) -> np.ndarray:
    """start:stop:count (linear) or log:start:stop:count (log-spaced)."""
    parts = text.split(":")
    try:
        if parts[0] == "log":
            if len(parts) != 4:
                raise ValueError
            start, stop, count = float(parts[1]), float(parts[2]), int(parts[3])
            if count < 1 or start <= 0 or stop <= 0:
                raise ValueError
            return np.geomspace(start, stop, count)
        if len(parts) != 3:
            raise ValueError
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError
        return np.linspace(start, stop, count)
    except ValueError:
        raise ConfigError(
            f"bad range {text!r}: expected start:stop:count or log:start:stop:count"
        ) from None


def _merge_file(cfg: dict, data: dict, prefix: str = "") -> None:
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in cfg:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(cfg[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path!r} must be a section")
            _merge_file(cfg[key], value, prefix=f"{path}.")
        else:
            cfg[key] = _checked(path, value, cfg[key])


def _checked(path: str, value, default):
    if value is None:
        if path in _NULLABLE:
            return None
        raise ConfigError(f"config key {path!r} may not be null")
    want = _NULLABLE.get(path, type(default) if default is not None else None)
    if want is None:
        want = str
    if want is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if want is int and isinstance(value, bool):
        raise ConfigError(f"config key {path!r}: expected int, got bool")
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"config key {path!r}: expected a list")
        return list(value)
    if not isinstance(value, want):
        raise ConfigError(
            f"config key {path!r}: expected {want.__name__}, got {type(value).__name__}"
        )
    return value


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        node = node[key]
    node[keys[-1]] = _checked(dotted, value, node[keys[-1]])


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{key}: {message}")


@dataclass
class RunConfig:
    """Fully resolved run description plus the validated lattice/objects."""

    experiment: str
    values: dict
    lattice: object
    noise: object  # NoiseModel | None
    training: TrainingConfig
    out_dir: Path
    threads: int
    seed: int


# flag name, dotted config path, parser
_COMMON_FLAGS = [
    ("--seed", "seed", int),
    ("--threads", "threads", int),
    ("--out", "out_dir", str),
    ("--rows", "lattice.rows", int),
    ("--cols", "lattice.cols", int),
    ("--inactive-sites", "lattice.inactive_sites", "int_list"),
    ("--coupling-mhz", "lattice.coupling_mhz", float),
    ("--readout-index", "lattice.readout_index", int),
    ("--lattice-preset", "lattice.preset", str),
    ("--h-erg-mhz", "physics.h_erg_mhz", float),
    ("--h-loc-mhz", "physics.h_loc_mhz", float),
    ("--t-state-ns", "physics.t_state_ns", float),
    ("--t0-ns", "physics.t0_ns", float),
    ("--epochs", "training.epochs", int),
    ("--optimizer", "training.optimizer", str),
    ("--learning-rate", "training.learning_rate", float),
    ("--gradient-mode", "training.gradient_mode", str),
    ("--batch-mode", "training.batch_mode", str),
    ("--threshold", "training.threshold", float),
    ("--weight-ergodic", "training.weight_ergodic", float),
    ("--weight-localized", "training.weight_localized", float),
    ("--layers", "training.layers", int),
    ("--init-candidates", "training.init_candidates", int),
    ("--train-per-class", "training.n_train_per_class", int),
    ("--test-per-class", "training.n_test_per_class", int),
    ("--init-per-class", "training.n_init_per_class", int),
    ("--f00", "noise.f00", float),
    ("--f11", "noise.f11", float),
    ("--shots", "noise.shots", int),
    ("--noise-seed", "noise.seed", int),
]

_SUBCOMMAND_FLAGS = {
    "imbalance": [
        ("--h-mhz", "imbalance.h_mhz", float),
        ("--time-grid", "imbalance.time_grid", str),
        ("--realizations", "imbalance.realizations", int),
    ],
    "level-stats": [
        ("--h-over-g", "level_stats.h_over_g", str),
        ("--realizations", "level_stats.realizations", int),
        ("--excitation-count", "level_stats.excitation_count", int),
        ("--middle-fraction", "level_stats.middle_fraction", float),
    ],
    "train": [],
    "classify": [
        ("--model", "classify.model", str),
        ("--n-per-class", "classify.n_per_class", int),
    ],
    "sweep-disorder": [
        ("--h-over-g", "sweep_disorder.h_over_g", str),
        ("--profiles", "sweep_disorder.profiles", int),
        ("--model", "sweep_disorder.model", str),
    ],
    "sweep-time": [
        ("--time-grid", "sweep_time.time_grid", str),
        ("--retrain-times", "sweep_time.retrain_times", "float_list"),
        ("--retrain-instances", "sweep_time.retrain_instances", int),
        ("--model", "sweep_time.model", str),
    ],
    "probe": [],
    "ramping": [
        ("--ramp-grid", "ramping.ramp_grid", str),
        ("--hold-ns", "ramping.hold_ns", float),
        ("--idle-offset-mhz", "ramping.idle_offset_mhz", float),
    ],
    "dataset": [
        ("--n-per-class", "dataset.n_per_class", int),
    ],
}


def _flag_dest(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qns",
        description="Disordered-XY lattice experiments and classifier training.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--noise", dest="noise_enabled", action="store_true", default=None)
        p.add_argument("--no-noise", dest="noise_enabled", action="store_false", default=None)
        for flag, _, kind in _COMMON_FLAGS + _SUBCOMMAND_FLAGS[name]:
            if kind == "int_list":
                p.add_argument(flag, default=None, type=lambda s: [int(x) for x in s.split(",") if x])
            elif kind == "float_list":
                p.add_argument(flag, default=None, type=lambda s: [float(x) for x in s.split(",") if x])
            else:
                p.add_argument(flag, default=None, type=kind)
    return parser


def parse_config(args: argparse.Namespace) -> RunConfig:
    """Resolve file + flags + defaults into a validated RunConfig."""
    cfg = copy.deepcopy(DEFAULTS)
    experiment = args.experiment
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
        _merge_file(cfg, data)
        if cfg["experiment"] is not None and cfg["experiment"] != experiment:
            raise ConfigError(
                f"experiment: config file names {cfg['experiment']!r} "
                f"but the subcommand is {experiment!r}"
            )
    cfg["experiment"] = experiment

    for flag, dotted, _ in _COMMON_FLAGS + _SUBCOMMAND_FLAGS[experiment]:
        value = getattr(args, _flag_dest(flag))
        if value is not None:
            _set_path(cfg, dotted, value)
    if args.noise_enabled is not None:
        cfg["noise"]["enabled"] = bool(args.noise_enabled)

    threads = thread_count(cfg["threads"])
    cfg["threads"] = threads
    if cfg["out_dir"] is None:
        cfg["out_dir"] = f"runs/{experiment}"

    # constraint checks, each naming the offending key
    _require(cfg["seed"] >= 0, "seed", "must be >= 0")
    _require(threads >= 1, "threads", "must be >= 1")
    t = cfg["training"]
    _require(t["epochs"] >= 1, "training.epochs", "must be >= 1")
    _require(t["weight_ergodic"] > 0, "training.weight_ergodic", "must be > 0")
    _require(t["weight_localized"] > 0, "training.weight_localized", "must be > 0")
    _require(t["layers"] >= 1, "training.layers", "must be >= 1")
    _require(t["init_candidates"] >= 1, "training.init_candidates", "must be >= 1")
    for key in ("n_train_per_class", "n_test_per_class", "n_init_per_class"):
        _require(t[key] >= 1, f"training.{key}", "must be >= 1")
    ph = cfg["physics"]
    _require(ph["h_erg_mhz"] >= 0, "physics.h_erg_mhz", "must be >= 0")
    _require(ph["h_loc_mhz"] >= 0, "physics.h_loc_mhz", "must be >= 0")
    _require(ph["t_state_ns"] >= 0, "physics.t_state_ns", "must be >= 0")
    _require(ph["t0_ns"] >= 0, "physics.t0_ns", "must be >= 0")
    model_key = {
        "classify": "classify",
        "sweep-disorder": "sweep_disorder",
        "sweep-time": "sweep_time",
    }.get(experiment)
    if model_key is not None:
        model_path = cfg[model_key]["model"]
        _require(
            model_path is None or Path(model_path).is_file(),
            f"{model_key}.model",
            f"model file {model_path!r} does not exist",
        )

    try:
        lattice = _lattice_from_cfg(cfg["lattice"])
        noise = _noise_from_cfg(cfg["noise"])
        training = TrainingConfig(
            epochs=t["epochs"],
            optimizer=t["optimizer"],
            learning_rate=t["learning_rate"],
            weight_ergodic=t["weight_ergodic"],
            weight_localized=t["weight_localized"],
            gradient_mode=t["gradient_mode"],
            t0_ns=ph["t0_ns"],
            batch_mode=t["batch_mode"],
            threshold=t["threshold"],
            seed=cfg["seed"],
            layers=t["layers"],
            fd_step=t["fd_step"],
            evolve_tol=t["evolve_tol"],
        )
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None

    return RunConfig(
        experiment=experiment,
        values=cfg,
        lattice=lattice,
        noise=noise,
        training=training,
        out_dir=Path(cfg["out_dir"]),
        threads=threads,
        seed=cfg["seed"],
    )


def _lattice_from_cfg(lat: dict):
    if lat["preset"] is not None:
        return load_lattice_preset(lat["preset"])
    mask = None
    if lat["inactive_sites"]:
        mask = [True] * (lat["rows"] * lat["cols"])
        for s in lat["inactive_sites"]:
            if not 0 <= int(s) < len(mask):
                raise ConfigError(f"lattice.inactive_sites: site {s} outside the grid")
            mask[int(s)] = False
    return build_lattice(
        lat["rows"],
        lat["cols"],
        active_mask=mask,
        coupling_mhz=lat["coupling_mhz"],
        readout_index=lat["readout_index"],
    )


def _noise_from_cfg(noise: dict):
    if not noise["enabled"]:
        return None
    return xp.NoiseModel(
        f00=noise["f00"], f11=noise["f11"], shots=noise["shots"], seed=noise["seed"]
    )


def _classification_config(config: RunConfig) -> xp.ClassificationConfig:
    t = config.values["training"]
    ph = config.values["physics"]
    return xp.ClassificationConfig(
        training=config.training,
        n_train_per_class=t["n_train_per_class"],
        n_test_per_class=t["n_test_per_class"],
        n_init_per_class=t["n_init_per_class"],
        n_init_candidates=t["init_candidates"],
        h_erg_mhz=ph["h_erg_mhz"],
        h_loc_mhz=ph["h_loc_mhz"],
        t_state_ns=ph["t_state_ns"],
        noise=config.noise,
        retrain_times_ns=tuple(config.values["sweep_time"]["retrain_times"]),
        retrain_instances=config.values["sweep_time"]["retrain_instances"],
    )


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def dispatch(config: RunConfig) -> list:
    """Run the configured experiment; returns the artifact paths written."""
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", config.values)
    artifacts = ["config.json"]
    t_start = time.perf_counter()

    handler = {
        "imbalance": _run_imbalance,
        "level-stats": _run_level_stats,
        "train": _run_train,
        "classify": _run_classify,
        "sweep-disorder": _run_sweep_disorder,
        "sweep-time": _run_sweep_time,
        "probe": _run_probe,
        "ramping": _run_ramping,
        "dataset": _run_dataset,
    }[config.experiment]
    record, curves, extra = handler(config)

    for name, (columns, rows) in curves.items():
        write_csv(out / f"{name}.csv", columns, rows)
        artifacts.append(f"{name}.csv")
    artifacts.extend(extra)
    record.duration_s = time.perf_counter() - t_start
    payload = record.to_dict()
    payload["artifacts"] = sorted(artifacts + ["record.json"])
    write_json(out / "record.json", payload)
    return [str(out / a) for a in payload["artifacts"]]


def _base_record(config: RunConfig, metrics: dict) -> xp.ExperimentRecord:
    return xp.ExperimentRecord(
        kind=config.experiment,
        config=config.values,
        master_seed=config.seed,
        metrics=metrics,
    )


def _run_imbalance(config: RunConfig):
    sect = config.values["imbalance"]
    grid = parse_range(sect["time_grid"])
    result = xp.run_imbalance_dynamics(
        config.lattice,
        sect["h_mhz"],
        grid,
        sect["realizations"],
        config.seed,
        threads=config.threads,
    )
    record = _base_record(config, {"i_mean_200ns": result.i_mean_200})
    return record, {"imbalance": (result.columns(), result.rows())}, []


def _run_level_stats(config: RunConfig):
    sect = config.values["level_stats"]
    grid = parse_range(sect["h_over_g"])
    k = sect["excitation_count"]
    if k is None:
        k = neel_sector_count(config.lattice)
    sweep = mean_gap_ratio_sweep(
        config.lattice,
        k,
        grid,
        sect["realizations"],
        config.seed,
        middle_fraction=sect["middle_fraction"],
        threads=config.threads,
    )
    record = _base_record(
        config,
        {
            "excitation_count": k,
            "r_mean_min": float(sweep.r_mean.min()),
            "r_mean_max": float(sweep.r_mean.max()),
        },
    )
    return record, {"level_stats": (sweep.columns(), sweep.rows())}, []


def _train_outcome(config: RunConfig, probe: bool = False):
    cc = _classification_config(config)
    runner = xp.run_probe_experiment if probe else xp.run_classification_experiment
    outcome = runner(config.lattice, cc)
    return outcome


def _emit_model_and_curves(config: RunConfig, outcome) -> tuple:
    out = config.out_dir
    save_model(out / "model.json", outcome.model)
    curves = {
        name: (c["columns"], c["rows"]) for name, c in outcome.record.curves.items()
    }
    record = _base_record(config, outcome.record.metrics)
    record.kind = outcome.record.kind
    return record, curves, ["model.json"]


def _run_train(config: RunConfig):
    return _emit_model_and_curves(config, _train_outcome(config))


def _run_probe(config: RunConfig):
    return _emit_model_and_curves(config, _train_outcome(config, probe=True))


def _load_or_train_model(config: RunConfig, model_path):
    if model_path is not None:
        return load_model(model_path), []
    outcome = _train_outcome(config)
    save_model(config.out_dir / "model.json", outcome.model)
    return outcome.model, ["model.json"]


def _run_classify(config: RunConfig):
    sect = config.values["classify"]
    model, extra = _load_or_train_model(config, sect["model"])
    ph = config.values["physics"]
    samples = xp.generate_dataset(
        config.lattice,
        sect["n_per_class"],
        ph["h_erg_mhz"],
        ph["h_loc_mhz"],
        ph["t_state_ns"],
        derive_seed(config.seed, "classify-set"),
    )
    transform = xp.noise_transform(config.noise, derive_seed(config.seed, "classify-noise"))
    rows = []
    correct = 0
    for i, sample in enumerate(samples):
        state = realize_sample(config.lattice, sample, model.config.evolve_tol)
        p = qnn_forward(
            state, model.params, config.lattice, model.config.t0_ns, model.config.evolve_tol
        )
        if transform is not None:
            p = float(transform(np.array([p]))[0])
        predicted = classify_p(p, model.threshold)
        correct += int(predicted == sample.label)
        rows.append([i, sample.label, sample.h_mhz, p, predicted])
    record = _base_record(
        config,
        {
            "accuracy": correct / len(samples),
            "threshold": float(model.threshold),
            "samples": len(samples),
        },
    )
    curves = {
        "classifications": (["sample", "label", "h_mhz", "p", "predicted"], rows)
    }
    return record, curves, extra


def _run_sweep_disorder(config: RunConfig):
    sect = config.values["sweep_disorder"]
    model, extra = _load_or_train_model(config, sect["model"])
    grid = parse_range(sect["h_over_g"])
    result = xp.run_disorder_sweep(
        model,
        config.lattice,
        grid,
        sect["profiles"],
        derive_seed(config.seed, "disorder-sweep"),
        t_state_ns=config.values["physics"]["t_state_ns"],
        noise=config.noise,
        threads=config.threads,
    )
    record = _base_record(config, {"threshold": float(model.threshold)})
    return record, {"disorder_sweep": (result.columns(), result.rows())}, extra


def _run_sweep_time(config: RunConfig):
    sect = config.values["sweep_time"]
    model, extra = _load_or_train_model(config, sect["model"])
    grid = parse_range(sect["time_grid"])
    result = xp.run_time_sweep(
        model,
        config.lattice,
        grid,
        _classification_config(config),
        seed=derive_seed(config.seed, "time-sweep"),
        threads=config.threads,
    )
    metrics = {"threshold": float(model.threshold)}
    if result.retrain_accuracy.size:
        metrics["retrain_accuracy_min"] = float(result.retrain_accuracy.min())
    record = _base_record(config, metrics)
    curves = {
        "time_sweep": (result.columns(), result.rows()),
        "retrain_accuracy": (result.retrain_columns(), result.retrain_rows()),
    }
    return record, curves, extra


def _run_ramping(config: RunConfig):
    sect = config.values["ramping"]
    grid = parse_range(sect["ramp_grid"])
    pattern = neel_pattern(config.lattice)
    offset = sect["idle_offset_mhz"]
    idle = np.array(
        [
            offset if (pattern >> q) & 1 else -offset
            for q in range(config.lattice.num_qubits)
        ]
    )
    result = xp.run_ramping_study(
        config.lattice,
        grid,
        hold_ns=sect["hold_ns"],
        idle_offsets_mhz=idle,
    )
    record = _base_record(config, {"fidelity_min": float(result.fidelity.min())})
    return record, {"ramping": (result.columns(), result.rows())}, []


def _run_dataset(config: RunConfig):
    sect = config.values["dataset"]
    ph = config.values["physics"]
    samples = xp.generate_dataset(
        config.lattice,
        sect["n_per_class"],
        ph["h_erg_mhz"],
        ph["h_loc_mhz"],
        ph["t_state_ns"],
        derive_seed(config.seed, "dataset"),
    )
    rows = [
        [i, s.label, s.h_mhz, s.disorder_seed, s.t_state_ns]
        for i, s in enumerate(samples)
    ]
    record = _base_record(config, {"samples": len(samples)})
    curves = {
        "dataset": (["sample", "label", "h_mhz", "disorder_seed", "t_state_ns"], rows)
    }
    return record, curves, []


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = parse_config(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    try:
        dispatch(config)
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
