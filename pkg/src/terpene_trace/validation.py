"""Trace validation and resampling onto the uniform sensor grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import DEFAULT_SAMPLE_PERIOD, Trace

MIN_ESTIMATOR_LENGTH = 5
MAX_INTERPOLATED_GAP_S = 30.0
_TIME_TOL = 1e-6


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    index: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    sensor_id: str
    issues: tuple = field(default_factory=tuple)

    @property
    def valid(self) -> bool:
        return not self.issues

    def codes(self) -> list:
        return [i.code for i in self.issues]

    def to_dict(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "valid": self.valid,
            "issues": [{"code": i.code, "message": i.message, "index": i.index} for i in self.issues],
        }


def validate_trace(trace: Trace) -> ValidationReport:
    """Report every rule violation in ``trace``; never raises."""
    issues = []
    t, c = trace.t, trace.tvoc
    period = trace.sample_period

    if not np.all(np.isfinite(t)):
        issues.append(Issue("non_finite_time", "timestamps contain NaN or inf"))
    if not np.all(np.isfinite(c)):
        issues.append(Issue("non_finite_tvoc", "tvoc contains NaN or inf"))
    if np.any(t < 0):
        issues.append(Issue("negative_time", "timestamps must be >= 0", int(np.argmax(t < 0))))

    neg = np.flatnonzero(c < 0)
    for i in neg:
        issues.append(Issue("negative_tvoc", f"tvoc {c[i]} < 0 at t={t[i]}", int(i)))

    dt = np.diff(t)
    for i in np.flatnonzero(~(dt > 0)):
        issues.append(Issue("non_monotone", f"t[{i + 1}]={t[i + 1]} does not follow t[{i}]={t[i]}", int(i + 1)))
    for i in np.flatnonzero(dt > period + _TIME_TOL):
        issues.append(Issue("gap", f"{dt[i]:g} s gap after t={t[i]:g} (period {period:g} s)", int(i + 1)))
    for i in np.flatnonzero((dt > 0) & (np.abs(dt - period) > _TIME_TOL) & (dt < period)):
        issues.append(Issue("irregular_spacing", f"{dt[i]:g} s step after t={t[i]:g}", int(i + 1)))

    if len(trace) < MIN_ESTIMATOR_LENGTH:
        issues.append(Issue("too_short_for_estimators",
                            f"{len(trace)} samples; estimators need >= {MIN_ESTIMATOR_LENGTH}"))
    return ValidationReport(trace.sensor_id, tuple(issues))


def resample_to_grid(trace: Trace, period: float = DEFAULT_SAMPLE_PERIOD,
                     max_gap_s: float = MAX_INTERPOLATED_GAP_S):
    """Linearly interpolate ``trace`` onto ``t0 + k * period``.

    Gaps up to ``max_gap_s`` are bridged. Returns ``(resampled, report)``; on
    any blocking problem (larger gap, non-monotone time, negative or missing
    readings) the original trace is returned with a report listing them.
    """
    t, c = trace.t, trace.tvoc
    issues = []
    dt = np.diff(t)
    for i in np.flatnonzero(~(dt > 0)):
        issues.append(Issue("non_monotone", f"t[{i + 1}]={t[i + 1]} does not follow t[{i}]={t[i]}", int(i + 1)))
    for i in np.flatnonzero(dt > max_gap_s + _TIME_TOL):
        issues.append(Issue("gap", f"{dt[i]:g} s gap after t={t[i]:g} exceeds {max_gap_s:g} s", int(i + 1)))
    if not np.all(np.isfinite(c)):
        issues.append(Issue("non_finite_tvoc", "tvoc contains NaN or inf"))
    for i in np.flatnonzero(c < 0):
        issues.append(Issue("negative_tvoc", f"tvoc {c[i]} < 0 at t={t[i]}", int(i)))
    if len(trace) == 0:
        issues.append(Issue("too_short_for_estimators", "empty trace"))
    if issues:
        return trace, ValidationReport(trace.sensor_id, tuple(issues))

    t0 = t[0]
    n = int(np.floor((t[-1] - t0) / period + _TIME_TOL)) + 1
    grid = t0 + period * np.arange(n)

    def interp(values):
        if np.all(np.isnan(values)):
            return np.full(n, np.nan)
        ok = ~np.isnan(values)
        return np.interp(grid, t[ok], values[ok])

    out = Trace(trace.sensor_id, grid, np.interp(grid, t, c), interp(trace.temp), interp(trace.rh), period)
    return out, validate_trace(out)
