import json

import numpy as np
import pytest

from terpene_trace import io as tio
from terpene_trace.exceptions import MissingFile, SchemaError, ValidationFailed
from terpene_trace.features import dataset_features
from terpene_trace.physics import EmissionRow
from terpene_trace.simulator import DatasetConfig, generate_dataset, get_scenario
from terpene_trace.types import Trace


@pytest.fixture(scope="module")
def small():
    sc = get_scenario("exp1")
    return generate_dataset(DatasetConfig.from_scenario(sc, ["Control", "Citral", "BasilPlant"],
                                                        n_trials_per_label=2, seed=4))


def test_dataset_round_trip(tmp_path, small):
    tio.write_dataset(small, tmp_path / "d")
    back = tio.read_dataset(tmp_path / "d")
    assert back == small


def test_trace_csv_header_and_missing_cells(tmp_path):
    tr = Trace("S1", [0, 10], [150, 151], temp=[21.5, np.nan], rh=[np.nan, 40.0])
    text = tio.traces_to_csv([tr])
    assert text.splitlines()[0] == "timestamp_s,sensor_id,tvoc_ppb,temp_c,rh_pct"
    assert text.splitlines()[1] == "0.0,S1,150.0,21.5,"
    p = tmp_path / "t.csv"
    p.write_text(text)
    assert tio.read_trace_csv(p) == [tr]


def test_manifest_fields(small):
    m = tio.trial_manifest(small.trials[1])
    for key in ("trial_id", "label", "dosage_ul", "start_iso8601", "exposure_start_s", "exposure_end_s",
                "room", "sensors"):
        assert key in m
    assert m["room"]["volume_m3"] == 29.65 and "ventilation_m3_per_h" in m["room"]
    assert set(m["sensors"][0]) >= {"sensor_id", "position_m", "distance_to_source_m"}
    assert m["exposure_start_s"] == 60.0 and m["exposure_end_s"] == 960.0


def test_bare_manifest_without_extras(tmp_path, small):
    tio.write_dataset(small, tmp_path / "d")
    doc = json.loads((tmp_path / "d" / "manifest.json").read_text())
    for entry in doc["trials"]:
        for extra in ("protocol", "source_F", "trace_file"):
            entry.pop(extra)
        entry["room"].pop("baseline_ppb")
    (tmp_path / "d" / "manifest.json").write_text(json.dumps(doc["trials"]))
    back = tio.read_dataset(tmp_path / "d")
    assert back.trials[0].protocol.exposure_window == (60.0, 960.0)
    assert [t.traces for t in back.trials] == [t.traces for t in small.trials]


def test_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time,voc\n0,150\n")
    with pytest.raises(SchemaError, match="timestamp_s,sensor_id,tvoc_ppb,temp_c,rh_pct"):
        tio.read_trace_csv(p)


def test_missing_files(tmp_path):
    with pytest.raises(MissingFile):
        tio.read_dataset(tmp_path)
    with pytest.raises(MissingFile):
        tio.read_trace_csv(tmp_path / "nope.csv")


def test_ingest_clean_and_gap(tmp_path, small):
    tio.write_dataset(small, tmp_path / "d")
    ds, reports = tio.ingest_dataset(tmp_path / "d")
    assert ds == small and all(r["valid"] for r in reports)
    path = tmp_path / "d" / "traces" / "T0001.csv"
    lines = path.read_text().splitlines()
    # drop 4 consecutive S2 rows -> 50 s gap
    s2 = [i for i, line in enumerate(lines) if ",S2," in line][10:14]
    path.write_text("\n".join(line for i, line in enumerate(lines) if i not in s2) + "\n")
    with pytest.raises(ValidationFailed) as err:
        tio.ingest_dataset(tmp_path / "d")
    assert err.value.problems == ["T0001/S2: gap"]


def test_ingest_resamples_jittered_clock(tmp_path):
    t = np.array([0, 10.4, 19.8, 30, 40.2, 50, 60, 70, 80, 90])
    tr = Trace("S1", t, 150 + t)
    (tmp_path / "traces").mkdir()
    (tmp_path / "traces" / "X.csv").write_text(tio.traces_to_csv([tr]))
    manifest = {"trial_id": "X", "label": "Control", "dosage_ul": None, "start_iso8601": "2024-01-01T00:00:00Z",
                "exposure_start_s": 0, "exposure_end_s": 90, "room": {"volume_m3": 29.65, "ventilation_m3_per_h": 59.3},
                "sensors": [{"sensor_id": "S1", "position_m": [0, 0, 0], "distance_to_source_m": 1.0}]}
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    ds, _ = tio.ingest_dataset(tmp_path)
    out = ds.trials[0].traces[0]
    np.testing.assert_allclose(out.t, np.arange(0, 100, 10))
    np.testing.assert_allclose(out.tvoc, 150 + out.t)


def test_emission_and_feature_csv(tmp_path, small):
    text = tio.emission_to_csv([EmissionRow("Citral", 200, "S1", 1.5, 3), EmissionRow("Control", None, "S1", 0.0, 2)])
    assert text.splitlines() == ["label,dosage_ul,sensor_id,mean_F,unit,n_trials",
                                 "Citral,200,S1,1.5,ppb*m3/h,3", "Control,,S1,0.0,ppb*m3/h,2"]
    fm = dataset_features(small)
    p = tmp_path / "f.csv"
    p.write_text(tio.feature_matrix_to_csv(fm))
    assert p.read_text().splitlines()[0].startswith("trial_id,sensor_id,label,baseline_ppb,delta_max_initial")
    back = tio.read_feature_matrix_csv(p)
    assert np.array_equal(back.values, fm.values) and back.labels == fm.labels
