import numpy as np
import pytest

from terpene_trace.types import Trace
from terpene_trace.validation import resample_to_grid, validate_trace


def test_well_formed_trace_is_valid(trace_factory):
    rep = validate_trace(trace_factory(np.full(90, 150.0)))
    assert rep.valid and rep.issues == ()


def test_short_trace(trace_factory):
    assert validate_trace(trace_factory([1, 2, 3, 4])).codes() == ["too_short_for_estimators"]


def test_gap_detected():
    t = np.r_[np.arange(0, 50, 10), np.arange(70, 120, 10)]
    rep = validate_trace(Trace("S", t, np.ones(t.size)))
    assert rep.codes() == ["gap"]


def test_all_violations_reported():
    tr = Trace("S", [0, 10, 10, 5], [1, -1, 2, 3])
    assert set(validate_trace(tr).codes()) == {"negative_tvoc", "non_monotone", "too_short_for_estimators"}


def test_resample_bridges_small_gaps():
    t = np.array([0, 10, 40, 50, 60.0])
    tr = Trace("S", t, [0, 10, 40, 50, 60.0])
    out, rep = resample_to_grid(tr)
    assert rep.valid
    np.testing.assert_array_equal(out.t, np.arange(0, 70, 10))
    np.testing.assert_allclose(out.tvoc, np.arange(0, 70, 10))


def test_resample_interpolates_jittered_timestamps():
    t = np.array([0, 9.5, 20.5, 30, 40, 50])
    out, rep = resample_to_grid(Trace("S", t, 2 * t))
    assert rep.valid
    np.testing.assert_allclose(out.tvoc, 2 * out.t)


def test_resample_rejects_large_gap():
    t = np.array([0, 10, 55, 65, 75.0])
    out, rep = resample_to_grid(Trace("S", t, np.ones(5)))
    assert not rep.valid and "gap" in rep.codes()
    assert out.t is not None and len(out) == 5


def test_report_serialises():
    d = validate_trace(Trace("S", [0, 10], [1, 2])).to_dict()
    assert d["valid"] is False and d["issues"][0]["code"] == "too_short_for_estimators"
