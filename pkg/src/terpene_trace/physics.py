"""Well-mixed single-zone mass balance and emission-rate inversion.

The model is linear in concentration, so any unit works as long as it is used
consistently: with C in ppb the emission rate comes out in ppb*m^3/h, with C
in ug/m^3 it is ug/h. Time arguments are hours; ventilation is m^3/h.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateInversion, IllConditioned, TraceTooShort
from .types import RoomConfig, Trace

SERIES_EPS = 1e-8           # below this Q*t/V the first-order series is used
ILL_CONDITIONED_XT = 1e-6   # inversion refuses Q*t/V below this
N_EDGE = 5                  # samples used for the initial level and for the final rates
MIN_TRIAL_LENGTH = 10


@dataclass(frozen=True)
class PhysicsParams:
    C_in: float
    F: float
    Q: float
    V: float
    t: float

    def __post_init__(self):
        if not self.V > 0:
            raise ValueError("V must be > 0")
        if self.Q < 0:
            raise ValueError("Q must be >= 0")
        if self.t < 0:
            raise ValueError("t must be >= 0")


def well_mixed(C_in, F, Q, V, t):
    """Room concentration after ``t`` hours; vectorised over ``t`` (and the rest).

    Uses ``C_in*exp(-x) - (F/Q)*expm1(-x)`` with ``x = Q*t/V``, which is the
    textbook ``(C_in - F/Q) exp(-x) + F/Q`` without the cancellation at small x.
    """
    C_in, F, Q, V, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (C_in, F, Q, V, t)))
    x = Q * t / V
    out = np.empty(x.shape)

    sealed = Q == 0
    small = ~sealed & (x < SERIES_EPS)
    regular = ~sealed & ~small

    out[sealed] = C_in[sealed] + F[sealed] / V[sealed] * t[sealed]
    xs = x[small]
    out[small] = C_in[small] * np.exp(-xs) + F[small] / V[small] * t[small] * (1.0 - xs / 2.0)
    xr = x[regular]
    out[regular] = C_in[regular] * np.exp(-xr) - F[regular] / Q[regular] * np.expm1(-xr)
    if out.ndim == 0:
        return float(out)
    return out


def concentration_at(p: PhysicsParams) -> float:
    return float(well_mixed(p.C_in, p.F, p.Q, p.V, p.t))


def emission_rate(C, C_in, Q, V, t) -> float:
    """Emission rate that takes the room from ``C_in`` to ``C`` in ``t`` hours."""
    if t == 0 or Q == 0:
        raise DegenerateInversion(f"emission inversion undefined for t={t}, Q={Q}")
    if Q < 0 or t < 0 or V <= 0:
        raise ValueError("need Q > 0, t > 0, V > 0")
    x = Q * t / V
    if x < ILL_CONDITIONED_XT:
        raise IllConditioned(f"Q*t/V = {x:.3g} < {ILL_CONDITIONED_XT:g}; the inversion is numerically meaningless")
    decay = math.exp(-x)
    return Q * (C - C_in * decay) / -math.expm1(-x)


@dataclass(frozen=True)
class EmissionEstimate:
    F_hat: float
    C_in_hat: float
    per_sample_F: tuple
    method: str


METHODS = ("paper", "baseline_corrected")


def trial_emission_rate(trace: Trace, room: RoomConfig, *, onset_s=None, duration_s=None,
                        method: str = "paper") -> EmissionEstimate:
    """Trial-level emission estimate from one sensor trace.

    The initial level is the median of the trace's first five readings. Rates
    are inverted at each of the last five samples of the analysis window
    ``[onset_s, onset_s + duration_s]`` (default: the whole trace, starting at
    its first sample), with elapsed time measured from ``onset_s``; the
    estimate is their median.

    ``method="baseline_corrected"`` treats the initial level as a sustained
    ambient floor, so only the excess above it is attributed to the source.
    The default ``"paper"`` feeds raw readings to the inversion, which
    attributes ``Q * baseline`` to the source.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if len(trace) < MIN_TRIAL_LENGTH:
        raise TraceTooShort(f"trace {trace.sensor_id} has {len(trace)} samples; need >= {MIN_TRIAL_LENGTH}")
    if room.ventilation_Q == 0:
        raise DegenerateInversion("room has no ventilation (Q = 0); emission inversion is undefined")

    c_in = float(np.median(trace.tvoc[:N_EDGE]))
    onset = float(trace.t[0]) if onset_s is None else float(onset_s)
    end = None if duration_s is None else onset + float(duration_s)
    win = trace.window(onset, end)
    if len(win) < N_EDGE:
        raise TraceTooShort(f"analysis window holds {len(win)} samples; need >= {N_EDGE}")

    rates = []
    for t_s, c in zip(win.t[-N_EDGE:], win.tvoc[-N_EDGE:]):
        t_h = (t_s - onset) / 3600.0
        if method == "paper":
            rates.append(emission_rate(float(c), c_in, room.ventilation_Q, room.volume_V, t_h))
        else:
            rates.append(emission_rate(float(c) - c_in, 0.0, room.ventilation_Q, room.volume_V, t_h))
    return EmissionEstimate(float(np.median(rates)), c_in, tuple(rates), f"median-of-last-{N_EDGE}/{method}")


@dataclass(frozen=True)
class EmissionRow:
    label: str
    dosage_ul: object
    sensor_id: str
    mean_F: float
    n_trials: int
    unit: str = "ppb*m3/h"


def aggregate_emission(groups, unit: str = "ppb*m3/h") -> list:
    """Mean emission per ``(label, dosage, sensor_id)`` group.

    ``groups`` maps each key to a sequence of estimates (``EmissionEstimate``
    or plain floats); an iterable of ``(key, estimate)`` pairs is accepted as
    well. Empty groups are dropped with a warning.
    """
    if not hasattr(groups, "items"):
        collected = OrderedDict()
        for key, est in groups:
            collected.setdefault(tuple(key), []).append(est)
        groups = collected
    rows = []
    for key, estimates in groups.items():
        label, dosage, sensor_id = key
        values = [e.F_hat if isinstance(e, EmissionEstimate) else float(e) for e in estimates]
        if not values:
            warnings.warn(f"no emission estimates for group {key}; excluded", stacklevel=2)
            continue
        rows.append(EmissionRow(str(label), dosage, str(sensor_id), float(np.mean(values)), len(values), unit))
    return rows
