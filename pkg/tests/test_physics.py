import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from terpene_trace.exceptions import DegenerateInversion, IllConditioned, TraceTooShort
from terpene_trace.physics import (
    EmissionEstimate, PhysicsParams, aggregate_emission, concentration_at, emission_rate,
    trial_emission_rate, well_mixed,
)
from terpene_trace.types import RoomConfig, Trace

ROOM = RoomConfig(29.65, 59.3, 150.0)


def textbook(C_in, F, Q, V, t):
    return (C_in - F / Q) * math.exp(-Q * t / V) + F / Q


@pytest.mark.parametrize("args", [(150, 1e5, 59.3, 29.65, 0.25), (0, 1, 1, 1, 1), (1e3, 0, 10, 5, 2)])
def test_matches_textbook_form(args):
    assert well_mixed(*args) == pytest.approx(textbook(*args), rel=1e-12)


def test_sealed_room_accumulates_linearly():
    assert well_mixed(25.0, 12.0, 0.0, 0.12, 0.5) == pytest.approx(25 + 12 * 0.5 / 0.12)


def test_series_branch_agrees_at_seam():
    V, t = 1.0, 1.0
    for Q in (0.99e-8, 1.01e-8):
        exact = 3.0 * math.exp(-Q * t / V) - 7.0 / Q * math.expm1(-Q * t / V)
        assert well_mixed(3.0, 7.0, Q, V, t) == pytest.approx(exact, rel=1e-12)


def test_vectorised_over_time():
    t = np.linspace(0, 2, 11)
    out = well_mixed(150.0, 1e4, 59.3, 29.65, t)
    assert out.shape == (11,)
    assert out[0] == 150.0
    assert np.all(np.diff(out) > 0)


def test_steady_state():
    assert well_mixed(0.0, 5930.0, 59.3, 29.65, 500.0) == pytest.approx(100.0)


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicsParams(0, 0, 1, 0, 1)
    with pytest.raises(ValueError):
        PhysicsParams(0, 0, -1, 1, 1)


def test_inversion_errors():
    with pytest.raises(DegenerateInversion):
        emission_rate(200, 150, 59.3, 29.65, 0.0)
    with pytest.raises(DegenerateInversion):
        emission_rate(200, 150, 0.0, 29.65, 1.0)
    with pytest.raises(IllConditioned):
        emission_rate(200, 150, 1e-9, 1000.0, 1e-4)


@settings(max_examples=300, deadline=None)
@given(C_in=st.floats(0, 1e6), F=st.floats(1.0, 1e7), Q=st.floats(0.01, 500), V=st.floats(0.01, 1000),
       t=st.floats(1e-3, 100))
def test_inverse_property(C_in, F, Q, V, t):
    assume(Q * t / V >= 1e-6)
    C = concentration_at(PhysicsParams(C_in, F, Q, V, t))
    # cancellation bound: the inversion subtracts C_in*exp(-x) from C
    x = Q * t / V
    scale = max(F, Q * C_in * math.exp(-x)) / -math.expm1(-x)
    assert abs(emission_rate(C, C_in, Q, V, t) - F) <= 1e-12 * scale + 1e-9 * F


@settings(max_examples=200, deadline=None)
@given(C_in=st.floats(0, 1e5), F=st.floats(0, 1e6), Q=st.floats(0.1, 100), V=st.floats(0.1, 100),
       t=st.floats(1e-3, 10), dF=st.floats(1, 1e3))
def test_monotone_in_F_and_C_in(C_in, F, Q, V, t, dF):
    x = Q * t / V
    base = well_mixed(C_in, F, Q, V, t)
    up_F = well_mixed(C_in, F + dF, Q, V, t)
    up_C = well_mixed(C_in + dF, F, Q, V, t)
    assert up_F >= base and up_C >= base
    # strict once the exact increment is above float resolution of the result
    if dF / Q * -math.expm1(-x) > 1e-9 * base:
        assert up_F > base
    if dF * math.exp(-x) > 1e-9 * base:
        assert up_C > base


def test_monotone_in_time_below_steady_state():
    ts = np.linspace(0, 5, 200)
    c = well_mixed(10.0, 1000.0, 5.0, 20.0, ts)
    assert np.all(np.diff(c) >= 0)


def _trace(values):
    values = np.asarray(values, dtype=float)
    return Trace("S1", 10.0 * np.arange(values.size), values)


def test_flat_trace_gives_Q_times_level():
    est = trial_emission_rate(_trace(np.full(20, 150.0)), ROOM)
    assert est.F_hat == pytest.approx(59.3 * 150.0, rel=1e-12)
    assert est.C_in_hat == 150.0


def test_flat_trace_baseline_corrected_is_zero():
    est = trial_emission_rate(_trace(np.full(20, 150.0)), ROOM, method="baseline_corrected")
    assert est.F_hat == 0.0


def test_default_method_treats_baseline_as_initial_condition():
    # ambient air is flushed out by ventilation: C_in decays while the source fills the room
    F = 2.5e5
    t = 10.0 * np.arange(127)
    onset = 60.0
    c = np.where(t < onset, 150.0, well_mixed(150.0, F, 59.3, 29.65, np.clip(t - onset, 0, None) / 3600.0))
    est = trial_emission_rate(Trace("S1", t, c), ROOM, onset_s=onset, duration_s=900.0)
    assert est.F_hat == pytest.approx(F, rel=1e-9)
    assert len(est.per_sample_F) == 5


def test_window_and_onset():
    F = 1e5
    t = 10.0 * np.arange(127)
    onset, dur = 60.0, 900.0
    excess = np.where(t < onset, 0.0, well_mixed(0.0, F, 59.3, 29.65, np.clip(t - onset, 0, dur) / 3600.0))
    est = trial_emission_rate(Trace("S1", t, 150.0 + excess), ROOM, onset_s=onset, duration_s=dur,
                              method="baseline_corrected")
    assert est.F_hat == pytest.approx(F, rel=1e-9)


def test_estimator_errors():
    with pytest.raises(TraceTooShort):
        trial_emission_rate(_trace(np.ones(9)), ROOM)
    with pytest.raises(DegenerateInversion):
        trial_emission_rate(_trace(np.ones(20)), RoomConfig(0.12, 0.0))
    with pytest.raises(ValueError):
        trial_emission_rate(_trace(np.ones(20)), ROOM, method="magic")


def test_aggregate_mean_per_group():
    rows = aggregate_emission({("Citral", 200, "S1"): [100.0, 300.0], ("Citral", 100, "S1"): [5.0]})
    assert [(r.label, r.dosage_ul, r.sensor_id, r.mean_F, r.n_trials) for r in rows] == [
        ("Citral", 200, "S1", 200.0, 2), ("Citral", 100, "S1", 5.0, 1)]


def test_aggregate_accepts_pairs_and_estimates():
    est = EmissionEstimate(42.0, 0.0, (42.0,), "x")
    rows = aggregate_emission([(("A", None, "S"), est), (("A", None, "S"), 44.0)])
    assert rows[0].mean_F == 43.0


def test_aggregate_drops_empty_groups_with_warning():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = aggregate_emission({("A", None, "S"): []})
    assert rows == [] and caught
