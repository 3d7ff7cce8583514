"""``terpene-trace`` command line: simulate, ingest, emission, evaluate, placement.

Exit codes: 0 success, 1 validation or configuration error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import io as tio
from .classify import (
    ForestParams, Pipeline, get_task, parse_tasks, placement_to_csv, rank_placements, run_task,
    task_available, tasks_to_csv,
)
from .exceptions import DegenerateInversion, IllConditioned, TerpeneTraceError, TraceTooShort
from .features import dataset_features
from .physics import METHODS, aggregate_emission, trial_emission_rate
from .simulator import DatasetConfig, generate_dataset, get_scenario, preset_library
from .types import TERPENE_FOR_LABEL, TERPENES
from .units import ppb_to_mass_conc

SEED_ENV = "TERPENE_TRACE_SEED"
EXIT_OK, EXIT_INVALID, EXIT_INTERNAL = 0, 1, 2
DEFAULT_TRIALS_PER_LABEL = 10


class ConfigError(TerpeneTraceError, ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    seed: Optional[int] = None
    out: Optional[str] = None
    data: Optional[str] = None
    preset: str = "exp2"
    labels: Optional[list] = None
    trials: Optional[int] = None
    trials_per_label: int = DEFAULT_TRIALS_PER_LABEL
    sensors: Optional[str] = None
    noise: bool = True
    f_jitter: float = 0.10
    drift_amplitude_ppb: float = 0.0
    tasks: str = "all"
    task: str = "all_chemicals"
    far_threshold_m: float = 2.0
    method: str = "paper"
    units: str = "ppb"
    k: int = 15
    test_fraction: float = 0.2
    forest: dict = field(default_factory=dict)
    jobs: int = 1
    plots: bool = False

    def pipeline(self) -> Pipeline:
        return Pipeline(k=self.k, forest=ForestParams(**{**self.forest, "seed": self.seed}),
                        test_fraction=self.test_fraction, seed=self.seed, n_jobs=self.jobs)


_CONFIG_KEYS = {f for f in RunConfig.__dataclass_fields__} - {"command"}


def _parse_seed(value, source) -> int:
    try:
        seed = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"seed from {source} must be an integer, got {value!r}") from None
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed from {source} must be in [0, 2^64)")
    return seed


def build_config(args) -> RunConfig:
    cfg = RunConfig(args.command)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        unknown = sorted(set(doc) - _CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"{path}: unknown config key(s): {', '.join(unknown)}")
        for key, value in doc.items():
            setattr(cfg, key, value)
    for key in ("out", "data", "preset", "trials", "trials_per_label", "sensors", "tasks", "task",
                "far_threshold_m", "method", "units", "k", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "labels", None):
        cfg.labels = [s.strip() for s in args.labels.split(",") if s.strip()]
    if getattr(args, "no_noise", False):
        cfg.noise = False
    if getattr(args, "plots", False):
        cfg.plots = True

    if args.seed is not None:
        cfg.seed = _parse_seed(args.seed, "--seed")
    elif cfg.seed is not None:
        cfg.seed = _parse_seed(cfg.seed, "config")
    elif os.environ.get(SEED_ENV):
        cfg.seed = _parse_seed(os.environ[SEED_ENV], SEED_ENV)
    if cfg.command in ("simulate", "evaluate", "placement") and cfg.seed is None:
        raise ConfigError(f"{cfg.command} needs a seed: pass --seed, set it in --config, or export {SEED_ENV}")
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def _require(cfg: RunConfig, *names):
    for name in names:
        if getattr(cfg, name) in (None, ""):
            raise ConfigError(f"{cfg.command} needs --{name}")


def _log(msg):
    print(msg, flush=True)


def _warn(msg):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------- commands

def _select_sensors(sensors, spec):
    if spec in (None, ""):
        return sensors
    spec = str(spec)
    if spec.isdigit():
        n = int(spec)
        if not 1 <= n <= len(sensors):
            raise ConfigError(f"--sensors must be in 1..{len(sensors)}")
        return sensors[:n]
    wanted = [s.strip() for s in spec.split(",") if s.strip()]
    by_id = {s.sensor_id: s for s in sensors}
    absent = [w for w in wanted if w not in by_id]
    if absent:
        raise ConfigError(f"unknown sensor(s) {', '.join(absent)}; preset has {', '.join(by_id)}")
    return tuple(by_id[w] for w in wanted)


def simulated_dataset(cfg: RunConfig):
    scenario = get_scenario(cfg.preset)
    config = DatasetConfig.from_scenario(
        scenario, cfg.labels,
        n_trials_per_label=cfg.trials_per_label, n_trials=cfg.trials, seed=cfg.seed,
        noise=cfg.noise, f_jitter=cfg.f_jitter, drift_amplitude_ppb=cfg.drift_amplitude_ppb, n_jobs=cfg.jobs,
    )
    config = replace(config, sensors=_select_sensors(config.sensors, cfg.sensors))
    return generate_dataset(config)


def cmd_simulate(cfg: RunConfig) -> int:
    _require(cfg, "out")
    ds = simulated_dataset(cfg)
    out = tio.write_dataset(ds, cfg.out)
    if cfg.plots:
        from .plots import plot_traces
        for trial in ds.trials[:min(len(ds), 5)]:
            plot_traces(trial, out / "plots" / f"{trial.trial_id}.svg")
    _log(f"simulated {len(ds)} trials, {ds.n_traces} traces -> {out}")
    return EXIT_OK


def _load(cfg: RunConfig):
    _require(cfg, "data")
    return tio.read_dataset(cfg.data)


def cmd_ingest(cfg: RunConfig) -> int:
    _require(cfg, "data")
    try:
        ds, reports = tio.ingest_dataset(cfg.data)
    except tio.ValidationFailed as e:
        for p in e.problems:
            _warn(f"invalid: {p}")
        if cfg.out:
            tio.write_text(Path(cfg.out) / "validation_report.json",
                           json.dumps({"valid": False, "problems": e.problems}, indent=2) + "\n")
        raise
    if cfg.out:
        out = tio.write_dataset(ds, cfg.out)
        tio.write_text(out / "validation_report.json",
                       json.dumps({"valid": True, "traces": reports}, indent=2) + "\n")
    _log(f"ingested {len(ds)} trials, {ds.n_traces} traces: all valid")
    return EXIT_OK


def _to_mass(value, label):
    info = TERPENE_FOR_LABEL.get(label, TERPENES["D-Limonene"])
    return ppb_to_mass_conc(value, info, 25.0) if value >= 0 else -ppb_to_mass_conc(-value, info, 25.0)


def cmd_emission(cfg: RunConfig) -> int:
    _require(cfg, "data", "out")
    if cfg.method not in METHODS:
        raise ConfigError(f"unknown method {cfg.method!r}; expected one of {', '.join(METHODS)}")
    if cfg.units not in ("ppb", "ug"):
        raise ConfigError("--units must be 'ppb' or 'ug'")
    ds = _load(cfg)
    groups, failures = {}, []
    for trial in ds.trials:
        onset, end = trial.protocol.exposure_window
        for tr in trial.traces:
            key = (trial.label.value, trial.dosage_ul, tr.sensor_id)
            groups.setdefault(key, [])
            try:
                est = trial_emission_rate(tr, trial.room, onset_s=onset, duration_s=end - onset, method=cfg.method)
            except (DegenerateInversion, IllConditioned, TraceTooShort) as e:
                failures.append({"trial_id": trial.trial_id, "sensor_id": tr.sensor_id,
                                 "error": type(e).__name__, "message": str(e)})
                continue
            F = est.F_hat if cfg.units == "ppb" else _to_mass(est.F_hat, trial.label)
            groups[key].append(F)
    unit = "ppb*m3/h" if cfg.units == "ppb" else "ug/h"
    groups = {k: v for k, v in groups.items() if v}
    rows = aggregate_emission(groups, unit=unit)
    out = tio.ensure_dir(cfg.out)
    tio.write_text(out / "emission.csv", tio.emission_to_csv(rows))
    tio.write_text(out / "emission_failures.json", json.dumps(failures, indent=2) + "\n")
    flagged = sorted({f["trial_id"] for f in failures})
    for tid in flagged:
        errs = sorted({f["error"] for f in failures if f["trial_id"] == tid})
        _warn(f"{tid}: {', '.join(errs)}")
    if cfg.plots and rows:
        from .plots import plot_emission
        plot_emission(rows, out / "emission.svg")
    _log(f"emission rows: {len(rows)}; trials flagged: {len(flagged)} of {len(ds)}")
    return EXIT_OK


def _feature_matrix(cfg: RunConfig):
    if cfg.data:
        ds = tio.read_dataset(cfg.data)
    else:
        ds = simulated_dataset(cfg)
    return ds, dataset_features(ds, n_jobs=cfg.jobs)


def cmd_evaluate(cfg: RunConfig) -> int:
    _require(cfg, "out")
    tasks = parse_tasks(cfg.tasks)
    run_all = str(cfg.tasks).strip() == "all"
    _, fm = _feature_matrix(cfg)
    out = tio.ensure_dir(cfg.out)
    reports = []
    for task in tasks:
        if not task_available(fm, task):
            if run_all:
                _warn(f"skipped {task.name}: data lacks classes {task.classes}")
                continue
        report = run_task(fm, task, cfg.pipeline())
        tio.write_text(out / f"{task.name}.json", report.to_json())
        tio.write_text(out / f"{task.name}.csv", tasks_to_csv([report]))
        reports.append(report)
        m = report.metrics
        _log(f"{task.name}: acc {m.accuracy:.3f} pre {m.precision:.3f} rec {m.recall:.3f} "
             f"f1 {m.f1:.3f} support {m.support}")
    if not reports:
        raise ConfigError("no requested task has its classes in the data")
    tio.write_text(out / "tasks.csv", tasks_to_csv(reports))
    if cfg.plots:
        from .plots import plot_accuracies
        plot_accuracies([r.task for r in reports], [r.metrics.accuracy for r in reports], out / "tasks.svg")
    return EXIT_OK


def cmd_placement(cfg: RunConfig) -> int:
    _require(cfg, "out")
    task = get_task(cfg.task)
    ds, fm = _feature_matrix(cfg)
    meta = {}
    for trial in ds.trials:
        for s in trial.sensors:
            meta.setdefault(s.sensor_id, (s.location or "", float(s.distance_to_source)))
    report = rank_placements(fm, task, cfg.pipeline(), sensor_meta=meta, far_threshold_m=cfg.far_threshold_m)
    out = tio.ensure_dir(cfg.out)
    tio.write_text(out / "placement.csv", placement_to_csv(report))
    tio.write_text(out / "placement.json", report.to_json())
    if cfg.plots:
        from .plots import plot_accuracies
        plot_accuracies([r.sensor_id for r in report.rows], [r.accuracy for r in report.rows],
                        out / "placement.svg", xlabel="sensor")
    for r in report.rows:
        _log(f"{r.sensor_id:>4}  {r.accuracy:.3f}  {r.distance_to_source_m:g} m  {r.location}")
    _log(report.recommendation_line())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "emission": cmd_emission,
    "evaluate": cmd_evaluate,
    "placement": cmd_placement,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with run settings; flags override it")
    common.add_argument("--seed", help=f"u64 seed (falls back to ${SEED_ENV})")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--plots", action="store_true", help="also write static SVG figures")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--preset", help=f"scenario: {', '.join(preset_library())}")
    sim.add_argument("--trials", type=int, help="total trials, dealt round-robin over the preset's sources")
    sim.add_argument("--trials-per-label", dest="trials_per_label", type=int)
    sim.add_argument("--labels", help="comma-separated source labels to include")
    sim.add_argument("--sensors", help="first N sensors, or a comma-separated list of sensor ids")
    sim.add_argument("--no-noise", dest="no_noise", action="store_true", help="ideal sensors, no F jitter")

    p = _Parser(prog="terpene-trace", description="Terpene TVOC trace simulation and analysis.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common, sim], help="generate a synthetic dataset")
    ing = sub.add_parser("ingest", parents=[common], help="resample and validate a dataset")
    ing.add_argument("--data", help="dataset directory or manifest")
    em = sub.add_parser("emission", parents=[common], help="emission-rate report")
    em.add_argument("--data")
    em.add_argument("--method", choices=METHODS)
    em.add_argument("--units", choices=("ppb", "ug"), help="report F in ppb*m3/h (default) or ug/h")
    ev = sub.add_parser("evaluate", parents=[common, sim], help="run classification tasks")
    ev.add_argument("--data", help="dataset directory; simulated from --preset when omitted")
    ev.add_argument("--tasks", help="comma-separated task names or 'all'")
    ev.add_argument("--k", type=int, help="features kept by top-k selection")
    pl = sub.add_parser("placement", parents=[common, sim], help="rank sensor placements")
    pl.add_argument("--data")
    pl.add_argument("--task", help="task used per sensor (default all_chemicals)")
    pl.add_argument("--far-threshold", dest="far_threshold_m", type=float)
    pl.add_argument("--k", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_INVALID
    try:
        cfg = build_config(args)
        return COMMANDS[cfg.command](cfg)
    except (TerpeneTraceError, ValueError, FileNotFoundError) as e:
        _warn(f"error: {e}")
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - the exit-code contract needs a catch-all
        _warn(f"internal error: {type(e).__name__}: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
