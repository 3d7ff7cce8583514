"""Domain value types shared across the package.

All types are frozen dataclasses. ``Trace`` stores its samples as read-only
numpy arrays rather than a list of :class:`Sample` objects; ``Trace.samples``
materialises the per-sample view on demand.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

DEFAULT_SAMPLE_PERIOD = 10.0


class LabelClass(str, enum.Enum):
    Control = "Control"
    AlphaTerpinene = "AlphaTerpinene"
    CisBetaOcimene = "CisBetaOcimene"
    Citral = "Citral"
    DLimonene = "DLimonene"
    BasilPlant = "BasilPlant"
    BasilStressed = "BasilStressed"

    def __str__(self):
        return self.value

    @property
    def is_terpene(self) -> bool:
        return self in TERPENE_LABELS

    @property
    def is_plant(self) -> bool:
        return self in (LabelClass.BasilPlant, LabelClass.BasilStressed)

    @classmethod
    def parse(cls, value) -> "LabelClass":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown label {value!r}; expected one of: {valid}") from None


TERPENE_LABELS = (
    LabelClass.AlphaTerpinene,
    LabelClass.CisBetaOcimene,
    LabelClass.Citral,
    LabelClass.DLimonene,
)

# canonical order, used for deterministic tie-breaking
LABEL_ORDER = {label: i for i, label in enumerate(LabelClass)}


@dataclass(frozen=True)
class Sample:
    t: float
    tvoc: float
    temp: Optional[float] = None
    rh: Optional[float] = None


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class Trace:
    """Time series of TVOC readings from one sensor in one trial.

    ``t`` is seconds since trial start and ``tvoc`` is in ppb. ``temp`` and
    ``rh`` are optional metadata arrays (NaN marks a missing cell).
    """

    __slots__ = ("sensor_id", "t", "tvoc", "temp", "rh", "sample_period")

    def __init__(self, sensor_id, t, tvoc, temp=None, rh=None,
                 sample_period=DEFAULT_SAMPLE_PERIOD):
        t = _frozen(t)
        tvoc = _frozen(tvoc)
        if t.ndim != 1 or t.shape != tvoc.shape:
            raise ValueError("t and tvoc must be 1-D arrays of equal length")
        n = t.size
        temp = _frozen(np.full(n, np.nan) if temp is None else temp)
        rh = _frozen(np.full(n, np.nan) if rh is None else rh)
        if temp.shape != t.shape or rh.shape != t.shape:
            raise ValueError("temp and rh must match the length of t")
        object.__setattr__(self, "sensor_id", str(sensor_id))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "tvoc", tvoc)
        object.__setattr__(self, "temp", temp)
        object.__setattr__(self, "rh", rh)
        object.__setattr__(self, "sample_period", float(sample_period))

    def __setattr__(self, name, value):
        raise AttributeError("Trace is immutable")

    @classmethod
    def from_samples(cls, sensor_id, samples: Sequence[Sample],
                     sample_period=DEFAULT_SAMPLE_PERIOD) -> "Trace":
        def opt(v):
            return np.nan if v is None else v
        return cls(
            sensor_id,
            [s.t for s in samples],
            [s.tvoc for s in samples],
            temp=[opt(s.temp) for s in samples],
            rh=[opt(s.rh) for s in samples],
            sample_period=sample_period,
        )

    @property
    def samples(self) -> tuple:
        def opt(v):
            return None if math.isnan(v) else float(v)
        return tuple(
            Sample(float(t), float(c), opt(tc), opt(h))
            for t, c, tc, h in zip(self.t, self.tvoc, self.temp, self.rh)
        )

    def __len__(self):
        return int(self.t.size)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.sensor_id == other.sensor_id
            and self.sample_period == other.sample_period
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.tvoc, other.tvoc)
            and np.array_equal(self.temp, other.temp, equal_nan=True)
            and np.array_equal(self.rh, other.rh, equal_nan=True)
        )

    def __hash__(self):
        return hash((self.sensor_id, self.t.tobytes(), self.tvoc.tobytes()))

    def __repr__(self):
        return f"Trace(sensor_id={self.sensor_id!r}, n={len(self)}, sample_period={self.sample_period})"

    def window(self, start_s=None, end_s=None) -> "Trace":
        """Sub-trace with ``start_s <= t <= end_s`` (either bound optional)."""
        mask = np.ones(len(self), dtype=bool)
        if start_s is not None:
            mask &= self.t >= start_s - 1e-9
        if end_s is not None:
            mask &= self.t <= end_s + 1e-9
        return Trace(self.sensor_id, self.t[mask], self.tvoc[mask],
                     self.temp[mask], self.rh[mask], self.sample_period)

    def with_tvoc(self, tvoc) -> "Trace":
        return Trace(self.sensor_id, self.t, tvoc, self.temp, self.rh, self.sample_period)


@dataclass(frozen=True)
class RoomConfig:
    volume_V: float
    ventilation_Q: float
    baseline_ppb: float = 150.0

    def __post_init__(self):
        if not self.volume_V > 0:
            raise ValueError(f"room volume must be > 0, got {self.volume_V}")
        if not self.ventilation_Q >= 0:
            raise ValueError(f"ventilation rate must be >= 0, got {self.ventilation_Q}")


ATOMIC_MASS = {"C": 12.011, "H": 1.008, "O": 15.999}
_FORMULA_TOKEN = re.compile(r"([A-Z][a-z]?)(\d*)")


def molar_mass_of(formula: str) -> float:
    """Molar mass in g/mol from a formula such as ``C10H16O``."""
    pos, total = 0, 0.0
    for m in _FORMULA_TOKEN.finditer(formula):
        if m.start() != pos:
            break
        element, count = m.group(1), m.group(2)
        if element not in ATOMIC_MASS:
            raise ValueError(f"unsupported element {element!r} in {formula!r}")
        total += ATOMIC_MASS[element] * (int(count) if count else 1)
        pos = m.end()
    if pos != len(formula) or not formula:
        raise ValueError(f"cannot parse formula {formula!r}")
    return total


@dataclass(frozen=True)
class TerpeneInfo:
    name: str
    formula: str
    molar_mass: float
    # screening-run deltas (ppb) reported alongside each essence
    delta_final_initial: Optional[float] = None
    delta_max_initial: Optional[float] = None

    def __post_init__(self):
        if not self.molar_mass > 0:
            raise ValueError("molar_mass must be > 0")

    @classmethod
    def from_formula(cls, name, formula, **kw) -> "TerpeneInfo":
        return cls(name, formula, molar_mass_of(formula), **kw)


_TERPENE_ROWS = [
    # name, formula, delta_final_initial, delta_max_initial
    ("alpha-Bisabolol", "C15H26O", 235, 257),
    ("alpha-Caryophyllene", "C15H24", 2, 36),
    ("alpha-Phellandrene", "C10H16", 530, 857),
    ("alpha-Pinene", "C10H16", 59, 59),
    ("alpha-Terpinene", "C10H16", 1266, 1811),
    ("beta-Caryophyllene", "C15H24", 42, 44),
    ("beta-Pinene", "C10H16", 15, 29),
    ("Cedrene", "C15H24", 1, 16),
    ("Cis-Beta-Ocimene", "C10H16", 38774, 38774),
    ("Citral", "C10H16O", 1106, 1106),
    ("Citronellol", "C10H20O", 112, 119),
    ("D-Limonene", "C10H16", 4356, 4356),
    ("Delta-3-Carene", "C10H16", 142, 142),
    ("Farnesene", "C15H24", 45, 54),
    ("Geraniol", "C10H18O", 45, 290),
    ("Linalool", "C10H18O", 23, 27),
]

TERPENES = {
    name: TerpeneInfo.from_formula(name, formula, delta_final_initial=df, delta_max_initial=dm)
    for name, formula, df, dm in _TERPENE_ROWS
}

TERPENE_FOR_LABEL = {
    LabelClass.AlphaTerpinene: TERPENES["alpha-Terpinene"],
    LabelClass.CisBetaOcimene: TERPENES["Cis-Beta-Ocimene"],
    LabelClass.Citral: TERPENES["Citral"],
    LabelClass.DLimonene: TERPENES["D-Limonene"],
}


@dataclass(frozen=True)
class Phase:
    name: str
    duration_s: float
    emission_multiplier: float = 1.0
    # purge phases open door/window; 1.0 keeps the room's nominal Q
    ventilation_multiplier: float = 1.0

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"phase {self.name!r}: duration must be > 0")
        if self.emission_multiplier < 0 or self.ventilation_multiplier < 0:
            raise ValueError(f"phase {self.name!r}: multipliers must be >= 0")


PHASE_NAMES = ("pre_baseline", "exposure", "settle", "purge", "stress_event")


@dataclass(frozen=True)
class ProtocolSpec:
    phases: tuple

    def __post_init__(self):
        phases = tuple(self.phases)
        if not phases:
            raise ValueError("protocol needs at least one phase")
        for p in phases:
            if not isinstance(p, Phase):
                raise TypeError("phases must be Phase instances")
            if p.name not in PHASE_NAMES:
                raise ValueError(f"unknown phase name {p.name!r}; known: {', '.join(PHASE_NAMES)}")
        object.__setattr__(self, "phases", phases)

    @classmethod
    def room_default(cls, pre_baseline_s=60.0, exposure_s=900.0, settle_s=300.0) -> "ProtocolSpec":
        return cls((
            Phase("pre_baseline", pre_baseline_s, 0.0),
            Phase("exposure", exposure_s, 1.0),
            Phase("settle", settle_s, 0.0),
        ))

    @property
    def total_s(self) -> float:
        return float(sum(p.duration_s for p in self.phases))

    def boundaries(self):
        """(phase, start_s, end_s) triples."""
        out, t0 = [], 0.0
        for p in self.phases:
            out.append((p, t0, t0 + p.duration_s))
            t0 += p.duration_s
        return out

    @property
    def exposure_window(self):
        """Start of the first emitting phase and end of the last one."""
        emitting = [(s, e) for p, s, e in self.boundaries() if p.emission_multiplier > 0]
        if not emitting:
            return (0.0, self.total_s)
        return (emitting[0][0], emitting[-1][1])


@dataclass(frozen=True)
class SensorSpec:
    sensor_id: str
    position: tuple = (0.0, 0.0, 0.0)
    distance_to_source: float = 0.0
    attenuation_g: float = 1.0
    transport_delay_s: float = 0.0
    range_ppb: tuple = (20.0, 36000.0)
    calibration_accuracy: float = 0.15
    read_noise_sigma: float = 5.0
    resolution: float = 1.0
    location: str = ""

    def __post_init__(self):
        if not 0 < self.attenuation_g <= 1:
            raise ValueError(f"sensor {self.sensor_id}: attenuation must be in (0, 1]")
        if self.transport_delay_s < 0:
            raise ValueError(f"sensor {self.sensor_id}: delay must be >= 0")
        lo, hi = self.range_ppb
        if not lo < hi:
            raise ValueError(f"sensor {self.sensor_id}: range min must be < max")
        if self.resolution <= 0 or self.read_noise_sigma < 0 or self.calibration_accuracy < 0:
            raise ValueError(f"sensor {self.sensor_id}: invalid noise model")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "range_ppb", (float(lo), float(hi)))

    @property
    def display_location(self) -> str:
        return self.location or self.sensor_id


@dataclass(frozen=True)
class SourceProfile:
    label: LabelClass
    F_base: float
    decay_tau: Optional[float] = None
    dosage_ul: Optional[int] = None
    stress_delta_F: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "label", LabelClass.parse(self.label))
        if self.F_base < 0:
            raise ValueError("F_base must be >= 0")
        if self.stress_delta_F < 0:
            raise ValueError("stress_delta_F must be >= 0")
        if self.stress_delta_F > 0 and not self.label.is_plant:
            raise ValueError("stress_delta_F is only meaningful for plant sources")
        if self.decay_tau is not None and not self.decay_tau > 0:
            raise ValueError("decay_tau must be > 0 when set")

    @property
    def key(self) -> str:
        return self.label.value if self.dosage_ul is None else f"{self.label.value}@{self.dosage_ul}"


@dataclass(frozen=True)
class TrialRecord:
    trial_id: str
    label: LabelClass
    dosage_ul: Optional[int]
    traces: tuple
    protocol: ProtocolSpec
    room: RoomConfig
    sensors: tuple = ()
    start_iso8601: str = "1970-01-01T00:00:00Z"
    source_F: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "label", LabelClass.parse(self.label))
        object.__setattr__(self, "traces", tuple(self.traces))
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if self.label.is_terpene != (self.dosage_ul is not None):
            raise ValueError(f"trial {self.trial_id}: dosage must be set iff the label is a terpene essence")
        if self.dosage_ul is not None and self.dosage_ul not in (100, 200):
            raise ValueError(f"trial {self.trial_id}: dosage must be 100 or 200 uL")
        if self.traces:
            t0 = self.traces[0].t
            for tr in self.traces[1:]:
                if not np.array_equal(tr.t, t0):
                    raise ValueError(f"trial {self.trial_id}: traces do not share a time axis")

    def trace_for(self, sensor_id) -> Trace:
        for tr in self.traces:
            if tr.sensor_id == sensor_id:
                return tr
        raise KeyError(sensor_id)

    def sensor(self, sensor_id) -> Optional[SensorSpec]:
        for s in self.sensors:
            if s.sensor_id == sensor_id:
                return s
        return None


@dataclass(frozen=True)
class Dataset:
    trials: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    @property
    def n_traces(self) -> int:
        return sum(len(tr.traces) for tr in self.trials)

    @property
    def sensor_ids(self) -> list:
        seen = {}
        for trial in self.trials:
            for tr in trial.traces:
                seen.setdefault(tr.sensor_id, None)
        return list(seen)

    def filter(self, predicate) -> "Dataset":
        return Dataset(tuple(t for t in self.trials if predicate(t)))

    def restrict_sensors(self, sensor_ids) -> "Dataset":
        keep = set(sensor_ids)
        trials = []
        for t in self.trials:
            traces = tuple(tr for tr in t.traces if tr.sensor_id in keep)
            sensors = tuple(s for s in t.sensors if s.sensor_id in keep)
            trials.append(TrialRecord(t.trial_id, t.label, t.dosage_ul, traces, t.protocol,
                                      t.room, sensors, t.start_iso8601, t.source_F))
        return Dataset(tuple(trials))


def canonical_class_order(labels) -> list:
    """Known labels in enumeration order, then any other names sorted."""
    def key(v):
        name = v.value if isinstance(v, LabelClass) else v
        try:
            return (0, LABEL_ORDER[LabelClass(name)], "")
        except (ValueError, TypeError):
            return (1, 0, str(name))
    return sorted(set(labels), key=key)
