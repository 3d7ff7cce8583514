import csv
import json

import pytest

from terpene_trace.cli import main


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_simulate_counts(tmp_path, capsys):
    assert main(["simulate", "--preset", "exp2", "--trials", "100", "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    assert "1300 traces" in capsys.readouterr().out
    assert main(["simulate", "--preset", "exp2", "--trials", "1", "--sensors", "1", "--seed", "7",
                 "--out", str(tmp_path / "b")]) == 0
    assert "1 traces" in capsys.readouterr().out


def test_simulate_is_reproducible(tmp_path):
    args = ["simulate", "--preset", "exp1", "--trials", "6", "--seed", "3"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"])
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_seed_required_and_env_fallback(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("TERPENE_TRACE_SEED", raising=False)
    assert main(["simulate", "--trials", "1", "--out", str(tmp_path / "x")]) == 1
    assert "seed" in capsys.readouterr().err
    monkeypatch.setenv("TERPENE_TRACE_SEED", "3")
    assert main(["simulate", "--preset", "exp1", "--trials", "2", "--out", str(tmp_path / "env")]) == 0
    main(["simulate", "--preset", "exp1", "--trials", "2", "--seed", "3", "--out", str(tmp_path / "flag")])
    assert _files(tmp_path / "env") == _files(tmp_path / "flag")


def test_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "exp1", "trials": 2, "seed": 5, "noise": False}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_invalid_inputs_exit_1(tmp_path, capsys):
    assert main(["simulate", "--preset", "nope", "--seed", "1", "--out", str(tmp_path)]) == 1
    assert "exp2" in capsys.readouterr().err
    assert main(["simulate", "--bogus-flag"]) == 1
    assert main(["ingest", "--data", str(tmp_path / "missing")]) == 1


def test_ingest(tmp_path, capsys):
    main(["simulate", "--preset", "exp1", "--trials", "3", "--seed", "1", "--out", str(tmp_path / "d")])
    assert main(["ingest", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "i")]) == 0
    assert json.loads((tmp_path / "i" / "validation_report.json").read_text())["valid"] is True
    bad = tmp_path / "d" / "traces" / "T0000.csv"
    bad.write_text("time,voc\n0,150\n")
    assert main(["ingest", "--data", str(tmp_path / "d")]) == 1
    assert "timestamp_s,sensor_id,tvoc_ppb,temp_c,rh_pct" in capsys.readouterr().err


def test_ingest_reports_gap(tmp_path, capsys):
    main(["simulate", "--preset", "exp1", "--trials", "2", "--seed", "1", "--out", str(tmp_path / "d")])
    path = tmp_path / "d" / "traces" / "T0001.csv"
    lines = path.read_text().splitlines()
    drop = [i for i, line in enumerate(lines) if ",S3," in line][20:24]
    path.write_text("\n".join(line for i, line in enumerate(lines) if i not in drop) + "\n")
    assert main(["ingest", "--data", str(tmp_path / "d")]) == 1
    assert "T0001/S3" in capsys.readouterr().err


def test_emission_recovers_noise_free_rates(tmp_path):
    main(["simulate", "--preset", "exp1", "--trials", "9", "--no-noise", "--seed", "2", "--out", str(tmp_path / "d")])
    assert main(["emission", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "e"),
                 "--method", "baseline_corrected", "--plots"]) == 0
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())["trials"]
    truth = {(t["label"], str(t["dosage_ul"] or "")): t["source_F"] for t in manifest}
    rows = list(csv.DictReader((tmp_path / "e" / "emission.csv").open()))
    near = [r for r in rows if r["sensor_id"] in ("S1", "S2") and r["label"] != "Control"]
    assert near
    for r in near:
        F = truth[(r["label"], r["dosage_ul"])]
        assert abs(float(r["mean_F"]) - F) / F < 0.005
    assert (tmp_path / "e" / "emission.svg").read_bytes().startswith(b"<?xml")


def test_emission_units_ug(tmp_path):
    main(["simulate", "--preset", "exp1", "--trials", "3", "--seed", "2", "--out", str(tmp_path / "d")])
    assert main(["emission", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "e"), "--units", "ug"]) == 0
    assert ",ug/h," in (tmp_path / "e" / "emission.csv").read_text()


def test_emission_box_flags_every_trial(tmp_path, capsys):
    main(["simulate", "--preset", "box", "--trials", "3", "--seed", "2", "--out", str(tmp_path / "d")])
    assert main(["emission", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "e")]) == 0
    failures = json.loads((tmp_path / "e" / "emission_failures.json").read_text())
    assert {f["trial_id"] for f in failures} == {"T0000", "T0001", "T0002"}
    assert {f["error"] for f in failures} == {"DegenerateInversion"}
    assert "trials flagged: 3 of 3" in capsys.readouterr().out


@pytest.fixture(scope="module")
def exp2_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("exp2")
    main(["simulate", "--preset", "exp2", "--trials", "40", "--seed", "5", "--out", str(root / "d")])
    return root / "d"


def test_evaluate_and_determinism(tmp_path, exp2_dir):
    args = ["evaluate", "--data", str(exp2_dir), "--tasks", "cisbeta_vs_control,all_chemicals", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "3"]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    rep = json.loads((tmp_path / "a" / "cisbeta_vs_control.json").read_text())
    assert rep["metrics"]["acc"] >= 0.95 and rep["seed"] == 9
    assert len(rep["selected_features"]) == 15


def test_evaluate_unknown_task(tmp_path, exp2_dir, capsys):
    assert main(["evaluate", "--data", str(exp2_dir), "--tasks", "nope", "--seed", "1", "--out", str(tmp_path)]) == 1
    assert "all_chemicals_vs_control" in capsys.readouterr().err


def test_evaluate_all_skips_absent_classes(tmp_path, exp2_dir, capsys):
    assert main(["evaluate", "--data", str(exp2_dir), "--tasks", "all", "--seed", "1", "--out", str(tmp_path)]) == 0
    err = capsys.readouterr().err
    assert "skipped dlimonene_dosages" in err and "skipped basil_stressed_vs_basil_plant" in err
    assert len((tmp_path / "tasks.csv").read_text().splitlines()) == 12


def test_placement(tmp_path, exp2_dir, capsys):
    args = ["placement", "--data", str(exp2_dir), "--seed", "4", "--plots"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert "recommended placement" in capsys.readouterr().out
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    rows = list(csv.reader((tmp_path / "a" / "placement.csv").open()))
    assert rows[0] == ["sensor_location", "symbol", "ml_accuracy", "distance_to_source_m"]
    assert len(rows) == 14


def test_placement_single_sensor(tmp_path):
    main(["simulate", "--preset", "exp2", "--trials", "40", "--sensors", "RA", "--seed", "5",
          "--out", str(tmp_path / "d")])
    assert main(["placement", "--data", str(tmp_path / "d"), "--seed", "1", "--out", str(tmp_path / "p")]) == 0
    rep = json.loads((tmp_path / "p" / "placement.json").read_text())
    assert len(rep["ranking"]) == 1 and rep["recommendation"] == "RA"
