import math

import numpy as np
import pytest

from terpene_trace.types import (
    LABEL_ORDER, LabelClass, Phase, ProtocolSpec, RoomConfig, Sample, SensorSpec, SourceProfile, TERPENES,
    Trace, TrialRecord, canonical_class_order, molar_mass_of,
)


def test_label_round_trip():
    for label in LabelClass:
        assert LabelClass.parse(label.value) is label
        assert str(label) == label.value


def test_unknown_label_lists_valid_names():
    with pytest.raises(ValueError, match="Control"):
        LabelClass.parse("Basil")


def test_label_order_follows_enumeration():
    assert [l for l, _ in sorted(LABEL_ORDER.items(), key=lambda kv: kv[1])] == list(LabelClass)


def test_canonical_class_order_puts_known_labels_first():
    assert canonical_class_order(["Plant", "Control", "Chemical", "Citral"]) == ["Control", "Citral", "Chemical", "Plant"]


def test_trace_from_samples_round_trip():
    samples = [Sample(0.0, 150.0), Sample(10.0, 151.0, 21.5, 40.0)]
    tr = Trace.from_samples("S1", samples)
    assert tr.samples == tuple(samples)
    assert len(tr) == 2


def test_trace_is_immutable():
    tr = Trace("S1", [0, 10], [1, 2])
    with pytest.raises(AttributeError):
        tr.sensor_id = "x"
    with pytest.raises(ValueError):
        tr.tvoc[0] = 5


def test_trace_equality_treats_missing_metadata_as_equal():
    assert Trace("S1", [0, 10], [1, 2]) == Trace("S1", [0, 10], [1, 2])
    assert Trace("S1", [0, 10], [1, 2]) != Trace("S1", [0, 10], [1, 3])


def test_trace_window_is_inclusive():
    tr = Trace("S1", np.arange(0, 100, 10), np.arange(10))
    assert list(tr.window(20, 50).t) == [20, 30, 40, 50]


def test_molar_masses():
    assert molar_mass_of("C10H16") == pytest.approx(136.238, abs=1e-9)
    assert molar_mass_of("C10H16O") == pytest.approx(152.237, abs=1e-9)
    assert len(TERPENES) == 16
    for info in TERPENES.values():
        assert info.molar_mass == pytest.approx(molar_mass_of(info.formula))


@pytest.mark.parametrize("bad", ["", "c10", "C10H16X", "Xe"])
def test_molar_mass_rejects_bad_formula(bad):
    with pytest.raises(ValueError):
        molar_mass_of(bad)


def test_screening_deltas_present():
    assert TERPENES["Cis-Beta-Ocimene"].delta_max_initial == 38774
    assert TERPENES["alpha-Terpinene"].delta_max_initial == 1811
    assert TERPENES["alpha-Terpinene"].delta_final_initial == 1266


def test_room_config_invariants():
    with pytest.raises(ValueError):
        RoomConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        RoomConfig(1.0, -1.0)
    RoomConfig(0.12, 0.0)


def test_protocol_defaults_and_window():
    p = ProtocolSpec.room_default()
    assert p.total_s == 1260
    assert p.exposure_window == (60.0, 960.0)
    with pytest.raises(ValueError):
        ProtocolSpec((Phase("warmup", 10.0),))
    with pytest.raises(ValueError):
        Phase("exposure", 0.0)


def test_sensor_spec_invariants():
    with pytest.raises(ValueError):
        SensorSpec("S", attenuation_g=0.0)
    with pytest.raises(ValueError):
        SensorSpec("S", range_ppb=(10, 10))


def test_source_profile_stress_only_for_plants():
    with pytest.raises(ValueError):
        SourceProfile(LabelClass.Citral, 1.0, dosage_ul=200, stress_delta_F=1.0)
    SourceProfile(LabelClass.BasilStressed, 1.0, stress_delta_F=1.0)


def _trial(**kw):
    base = dict(trial_id="T1", label=LabelClass.Citral, dosage_ul=200, traces=(Trace("A", [0, 10], [1, 2]),),
                protocol=ProtocolSpec.room_default(), room=RoomConfig(29.65, 59.3))
    base.update(kw)
    return TrialRecord(**base)


def test_trial_dosage_rules():
    _trial()
    with pytest.raises(ValueError):
        _trial(dosage_ul=None)
    with pytest.raises(ValueError):
        _trial(label=LabelClass.Control)
    with pytest.raises(ValueError):
        _trial(dosage_ul=150)


def test_trial_traces_share_time_axis():
    with pytest.raises(ValueError):
        _trial(traces=(Trace("A", [0, 10], [1, 2]), Trace("B", [0, 20], [1, 2])))
    assert math.isnan(_trial().traces[0].temp[0])
