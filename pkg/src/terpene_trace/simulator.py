"""Synthetic trials: well-mixed room response observed by imperfect sensors.

The room response is the single-zone mass balance solved phase by phase. Each
sensor then scales the excess above ambient by an attenuation factor, delays
it, applies a per-trial calibration bias, adds read noise, quantises and
clips. Attenuation and delay are observation effects standing in for the
sensor-to-sensor spread a well-mixed model cannot produce.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from . import physics
from .exceptions import UnknownName
from .types import (
    DEFAULT_SAMPLE_PERIOD,
    TERPENE_FOR_LABEL,
    Dataset,
    LabelClass,
    Phase,
    ProtocolSpec,
    RoomConfig,
    SensorSpec,
    SourceProfile,
    Trace,
    TrialRecord,
)

ROOM_VOLUME_M3 = 29.65
ROOM_ACH = 2.0
BOX_VOLUME_M3 = 0.60 * 0.40 * 0.50
ROOM_BASELINE_PPB = 150.0
BOX_BASELINE_PPB = 25.0
ATTENUATION_PER_M = 0.15
DELAY_S_PER_M = 5.0
F_JITTER = 0.10
SECONDS_PER_HOUR = 3600.0
DAY_S = 86400.0
_EPOCH = _dt.datetime(2024, 3, 4, 8, 0, 0, tzinfo=_dt.timezone.utc)


def attenuation_for_distance(distance_m: float) -> float:
    return 1.0 / (1.0 + ATTENUATION_PER_M * max(distance_m, 0.0))


def delay_for_distance(distance_m: float) -> float:
    return DELAY_S_PER_M * max(distance_m, 0.0)


def _phi(d, s):
    """(1 - exp(-d*s)) / d, continuous through d = 0."""
    ds = d * s
    if abs(ds) < 1e-12:
        return s
    return -math.expm1(-ds) / d


@dataclass(frozen=True)
class BaselineDrift:
    """Slow sinusoidal ambient wander; zero amplitude disables it."""

    amplitude_ppb: float = 0.0
    period_s: float = DAY_S
    offset_s: float = 0.0

    def __call__(self, t):
        if self.amplitude_ppb == 0:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.amplitude_ppb * np.sin(2 * np.pi * (np.asarray(t, dtype=float) + self.offset_s) / self.period_s)


def _phase_rates(source: SourceProfile, phase: Phase):
    base = source.F_base * phase.emission_multiplier
    extra = source.stress_delta_F if (phase.name == "stress_event" and phase.emission_multiplier > 0) else 0.0
    return base, extra


def excess_concentration(room: RoomConfig, source: SourceProfile, protocol: ProtocolSpec, t):
    """Concentration above ambient at times ``t`` (seconds), piecewise per phase."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    V = room.volume_V
    onset_s = protocol.exposure_window[0]
    c0 = 0.0
    bounds = protocol.boundaries()
    for i, (phase, start, end) in enumerate(bounds):
        Q = room.ventilation_Q * phase.ventilation_multiplier
        base, extra = _phase_rates(source, phase)
        last = i == len(bounds) - 1
        mask = (t >= start) & ((t <= end) if last else (t < end))
        s_h = (t[mask] - start) / SECONDS_PER_HOUR
        dur_h = phase.duration_s / SECONDS_PER_HOUR
        if source.decay_tau is None or base == 0:
            F = base + extra
            out[mask] = physics.well_mixed(c0, F, Q, V, s_h) if s_h.size else s_h
            c0 = float(physics.well_mixed(c0, F, Q, V, dur_h))
        else:
            a = 1.0 / source.decay_tau
            k = Q / V
            A = base * math.exp(-a * max(start - onset_s, 0.0) / SECONDS_PER_HOUR)

            def solve(s, c0=c0, A=A, a=a, k=k, Q=Q, extra=extra):
                s = np.asarray(s, dtype=float)
                decaying = np.array([A / V * math.exp(-a * si) * _phi(k - a, si) for si in np.atleast_1d(s)])
                steady = physics.well_mixed(c0, extra, Q, V, s)
                return steady + decaying.reshape(np.shape(steady))

            if s_h.size:
                out[mask] = solve(s_h)
            c0 = float(solve(dur_h))
    return out


def true_concentration(room: RoomConfig, source: SourceProfile, protocol: ProtocolSpec, t,
                       drift: Optional[BaselineDrift] = None):
    """Total room concentration (ppb): ambient floor plus source excess."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    ambient = room.baseline_ppb + (drift(t) if drift is not None else 0.0)
    total = ambient + excess_concentration(room, source, protocol, t).reshape(t.shape)
    return float(total) if scalar else total


def sample_times(duration_s: float, period: float = DEFAULT_SAMPLE_PERIOD) -> np.ndarray:
    n = int(math.floor(duration_s / period + 1e-9)) + 1
    return period * np.arange(n)


def sensor_observe(c_true: Callable, spec: SensorSpec, seed, *, duration_s: float,
                   ambient=None, noise: bool = True, bias: Optional[float] = None,
                   sample_period: float = DEFAULT_SAMPLE_PERIOD) -> Trace:
    """Sample ``c_true`` every ``sample_period`` seconds through ``spec``.

    ``ambient`` (float or callable of t) marks the part of the signal that is
    not attenuated or delayed; when omitted the whole of ``c_true`` is. With
    ``noise=False`` the sensor is ideal apart from attenuation, delay and
    quantisation: no bias, no read noise, no range clipping.
    """
    rng = np.random.default_rng(seed)
    t = sample_times(duration_s, sample_period)
    t_src = np.maximum(t - spec.transport_delay_s, 0.0)
    if ambient is None:
        seen = spec.attenuation_g * np.asarray(c_true(t_src), dtype=float)
    else:
        amb = ambient if callable(ambient) else (lambda tt, a=float(ambient): np.full_like(tt, a))
        seen = amb(t) + spec.attenuation_g * (np.asarray(c_true(t_src), dtype=float) - amb(t_src))

    if noise:
        acc = spec.calibration_accuracy
        b = rng.uniform(1.0 - acc, 1.0 + acc) if bias is None else bias
        reading = b * seen + rng.normal(0.0, spec.read_noise_sigma, t.size)
    else:
        b = 1.0 if bias is None else bias
        reading = b * seen
    reading = np.round(reading / spec.resolution) * spec.resolution
    if noise:
        lo, hi = spec.range_ppb
        reading = np.clip(reading, lo, hi)
    return Trace(spec.sensor_id, t, reading + 0.0, sample_period=sample_period)


# ---------------------------------------------------------------- presets

@dataclass(frozen=True)
class Scenario:
    name: str
    room: RoomConfig
    sensors: tuple
    protocol: ProtocolSpec
    sources: tuple
    source_position: tuple = (0.0, 0.0, 0.0)

    def source(self, label, dosage_ul=None) -> SourceProfile:
        label = LabelClass.parse(label)
        for s in self.sources:
            if s.label == label and (dosage_ul is None or s.dosage_ul == dosage_ul):
                return s
        raise UnknownName(f"scenario {self.name!r} has no source {label}{'' if dosage_ul is None else f'@{dosage_ul}'}")

    @property
    def nearest_sensor(self) -> SensorSpec:
        return min(self.sensors, key=lambda s: (s.distance_to_source, s.sensor_id))


def place_sensors(layout, source_position, reference_distance=None, **spec_kw) -> tuple:
    """SensorSpecs from ``(sensor_id, location, position)`` rows.

    Attenuation and delay follow the default distance laws applied to the
    distance in excess of ``reference_distance`` (default: the closest sensor),
    so the closest sensor sees the room unattenuated and undelayed.
    """
    src = np.asarray(source_position, dtype=float)
    dists = [float(np.linalg.norm(np.asarray(pos, dtype=float) - src)) for _, _, pos in layout]
    ref = min(dists) if reference_distance is None else reference_distance
    out = []
    for (sid, loc, pos), d in zip(layout, dists):
        extra = max(round(d - ref, 9), 0.0)
        out.append(SensorSpec(
            sid, tuple(pos), round(d, 4),
            attenuation_g=attenuation_for_distance(extra),
            transport_delay_s=delay_for_distance(extra),
            location=loc, **spec_kw,
        ))
    return tuple(out)


ROOM_SOURCE_POSITION = (1.60, 1.50, 1.05)

EXP1_LAYOUT = (
    ("S1", "Desk, 75 cm", (0.85, 1.50, 1.05)),
    ("S2", "Desk, 75 cm", (2.35, 1.50, 1.05)),
    ("S3", "Desk, 125 cm", (1.60, 2.75, 1.05)),
    ("S4", "Desk, 125 cm", (1.60, 0.25, 1.05)),
)

EXP2_LAYOUT = (
    ("C", "On the Cabinet", (2.10, 1.80, 1.40)),
    ("T1", "Table 1", (1.00, 1.00, 0.75)),
    ("T2", "Table 2", (2.70, 0.60, 0.75)),
    ("T3", "Table 3", (1.00, 2.30, 0.75)),
    ("T4", "Table 4", (2.30, 2.30, 0.75)),
    ("FW", "Front wall next to window", (3.80, 2.80, 1.20)),
    ("RW", "Right wall", (1.90, 3.25, 1.40)),
    ("LR", "Left wall right side", (0.00, 2.40, 1.20)),
    ("LL", "Left wall left side", (0.00, 0.70, 1.20)),
    ("LU", "Left wall up", (0.00, 1.60, 2.10)),
    ("F", "On the Floor", (1.60, 1.50, 0.00)),
    ("RA", "Return Air (output)", (3.40, 0.30, 2.40)),
    ("SA", "Supply Air (input)", (0.50, 2.90, 2.40)),
)

BOX_LAYOUT = (("B1", "Box, next to plant", (0.40, 0.20, 0.10)),)
BOX_SOURCE_POSITION = (0.30, 0.20, 0.10)

# calibration targets (ppb at the closest sensor)
TERPENE_DELTA_MAX = {
    label: info.delta_max_initial for label, info in TERPENE_FOR_LABEL.items()
}
ROOM_BASIL_DELTA = 135.0       # crushed-leaf trial, 15 min of exposure
BOX_BASIL_DELTA_20MIN = 125.0  # unstressed plant accumulation over 20 min
BOX_STRESS_DELTA = 85.0        # extra rise from crushing one leaf


def calibrate_rate(target_delta: float, room: RoomConfig, exposure_s: float) -> float:
    """Constant emission rate giving ``target_delta`` above ambient after ``exposure_s``."""
    t_h = exposure_s / SECONDS_PER_HOUR
    if room.ventilation_Q == 0:
        return target_delta * room.volume_V / t_h
    return physics.emission_rate(target_delta, 0.0, room.ventilation_Q, room.volume_V, t_h)


def room_config() -> RoomConfig:
    return RoomConfig(ROOM_VOLUME_M3, ROOM_ACH * ROOM_VOLUME_M3, ROOM_BASELINE_PPB)


def box_protocol() -> ProtocolSpec:
    return ProtocolSpec((
        Phase("pre_baseline", 60.0, 0.0),
        Phase("exposure", 600.0, 1.0),
        Phase("stress_event", 120.0, 1.0),
        Phase("exposure", 1080.0, 1.0),
    ))


# Emission rate scales as (dose / 200 uL) ** DOSE_RATE_EXPONENT. Both doses
# saturate the filter paper, so evaporation is area-limited and the rate over
# a 15 min exposure does not depend on the applied volume.
DOSE_RATE_EXPONENT = 0.0


def room_sources(room: RoomConfig, protocol: ProtocolSpec, dosages=(200, 100),
                 dose_rate_exponent: float = DOSE_RATE_EXPONENT) -> tuple:
    start, end = protocol.exposure_window
    exposure_s = end - start
    out = [SourceProfile(LabelClass.Control, 0.0)]
    for label, target in TERPENE_DELTA_MAX.items():
        F200 = calibrate_rate(target, room, exposure_s)
        for dose in dosages:
            if label is LabelClass.AlphaTerpinene and dose != 200:
                continue
            out.append(SourceProfile(label, F200 * (dose / 200.0) ** dose_rate_exponent, dosage_ul=dose))
    out.append(SourceProfile(LabelClass.BasilPlant, calibrate_rate(ROOM_BASIL_DELTA, room, exposure_s)))
    return tuple(out)


def box_sources(room: RoomConfig) -> tuple:
    F_plant = calibrate_rate(BOX_BASIL_DELTA_20MIN, room, 1200.0)
    stress = calibrate_rate(BOX_STRESS_DELTA, room, 120.0)
    return (
        SourceProfile(LabelClass.Control, 0.0),
        SourceProfile(LabelClass.BasilPlant, F_plant),
        SourceProfile(LabelClass.BasilStressed, F_plant, stress_delta_F=stress),
    )


def preset_library() -> dict:
    """Named scenarios: ``exp1`` (4 desk sensors), ``exp2`` (13 sensors), ``box``."""
    room = room_config()
    protocol = ProtocolSpec.room_default()
    box_room = RoomConfig(BOX_VOLUME_M3, 0.0, BOX_BASELINE_PPB)
    return {
        "exp1": Scenario("exp1", room, place_sensors(EXP1_LAYOUT, ROOM_SOURCE_POSITION), protocol,
                         room_sources(room, protocol), ROOM_SOURCE_POSITION),
        "exp2": Scenario("exp2", room, place_sensors(EXP2_LAYOUT, ROOM_SOURCE_POSITION), protocol,
                         room_sources(room, protocol, dosages=(200,)), ROOM_SOURCE_POSITION),
        "box": Scenario("box", box_room, place_sensors(BOX_LAYOUT, BOX_SOURCE_POSITION), box_protocol(),
                        box_sources(box_room), BOX_SOURCE_POSITION),
    }


def get_scenario(name: str) -> Scenario:
    lib = preset_library()
    if name not in lib:
        raise UnknownName(f"unknown preset {name!r}; valid presets: {', '.join(lib)}")
    return lib[name]


# ---------------------------------------------------------------- datasets

@dataclass(frozen=True)
class DatasetConfig:
    room: RoomConfig
    sensors: tuple
    protocol: ProtocolSpec
    presets: tuple
    n_trials_per_label: int = 1
    seed: int = 0
    # total trial count, dealt round-robin over presets; overrides n_trials_per_label
    n_trials: Optional[int] = None
    noise: bool = True
    f_jitter: float = F_JITTER
    drift_amplitude_ppb: float = 0.0
    trial_spacing_s: float = 3600.0
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "presets", tuple(self.presets))
        if not self.presets:
            raise ValueError("at least one source preset is required")
        if not self.sensors:
            raise ValueError("at least one sensor is required")
        if self.n_trials is None and self.n_trials_per_label < 1:
            raise ValueError("n_trials_per_label must be >= 1")
        if self.n_trials is not None and self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")

    @classmethod
    def from_scenario(cls, scenario: Scenario, labels: Optional[Sequence] = None, **kw) -> "DatasetConfig":
        presets = scenario.sources
        if labels is not None:
            wanted = [LabelClass.parse(x) for x in labels]
            presets = tuple(s for s in presets if s.label in wanted)
        return cls(scenario.room, scenario.sensors, scenario.protocol, presets, **kw)

    def schedule(self) -> list:
        """Preset for each trial index."""
        P = len(self.presets)
        total = self.n_trials if self.n_trials is not None else self.n_trials_per_label * P
        return [self.presets[i % P] for i in range(total)]


def _simulate_trial(config: DatasetConfig, index: int, source: SourceProfile) -> TrialRecord:
    ss = np.random.SeedSequence(config.seed, spawn_key=(index,))
    trial_rng = np.random.default_rng(ss)
    factor = 1.0
    if config.noise and config.f_jitter > 0:
        factor = 1.0 + trial_rng.uniform(-config.f_jitter, config.f_jitter)
    src = replace(source, F_base=source.F_base * factor, stress_delta_F=source.stress_delta_F * factor)

    start_s = index * config.trial_spacing_s
    drift = BaselineDrift(config.drift_amplitude_ppb, offset_s=start_s) if config.drift_amplitude_ppb else None
    duration = config.protocol.total_s

    def c_true(t):
        return true_concentration(config.room, src, config.protocol, t, drift)

    def ambient(t):
        return config.room.baseline_ppb + (drift(t) if drift is not None else 0.0)

    traces = []
    for j, spec in enumerate(config.sensors):
        sensor_ss = np.random.SeedSequence(config.seed, spawn_key=(index, j + 1))
        traces.append(sensor_observe(c_true, spec, sensor_ss, duration_s=duration,
                                     ambient=ambient, noise=config.noise))
    start_iso = (_EPOCH + _dt.timedelta(seconds=start_s)).strftime("%Y-%m-%dT%H:%M:%SZ")
    return TrialRecord(
        trial_id=f"T{index:04d}",
        label=source.label,
        dosage_ul=source.dosage_ul,
        traces=tuple(traces),
        protocol=config.protocol,
        room=config.room,
        sensors=config.sensors,
        start_iso8601=start_iso,
        source_F=src.F_base,
    )


def generate_dataset(config: DatasetConfig) -> Dataset:
    """Labelled trials; a pure function of ``config`` (seeded per trial and sensor)."""
    schedule = config.schedule()
    if config.n_jobs == 1:
        trials = [_simulate_trial(config, i, s) for i, s in enumerate(schedule)]
    else:
        trials = Parallel(n_jobs=config.n_jobs, prefer="threads")(
            delayed(_simulate_trial)(config, i, s) for i, s in enumerate(schedule))
    return Dataset(tuple(trials))
