"""On-disk formats: trace CSV, trial manifest JSON, dataset directories, reports.

A dataset directory holds ``manifest.json`` (``{"version": 1, "trials": [...]}``)
and one ``traces/<trial_id>.csv`` per trial with every sensor's rows.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .exceptions import MissingFile, SchemaError, ValidationFailed
from .features import FeatureMatrix
from .types import (
    Dataset, LabelClass, Phase, ProtocolSpec, RoomConfig, SensorSpec, Trace, TrialRecord,
)
from .validation import resample_to_grid

TRACE_HEADER = ("timestamp_s", "sensor_id", "tvoc_ppb", "temp_c", "rh_pct")
EMISSION_HEADER = ("label", "dosage_ul", "sensor_id", "mean_F", "unit", "n_trials")
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
TRACE_DIR = "traces"


def _num(v: float) -> str:
    """Shortest round-trip text for a float; empty for NaN."""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def _write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------- traces

def traces_to_csv(traces) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for tr in traces:
        for t, c, tc, h in zip(tr.t, tr.tvoc, tr.temp, tr.rh):
            w.writerow([_num(t), tr.sensor_id, _num(c), _num(tc), _num(h)])
    return buf.getvalue()


def _cell(text, path, lineno, column, required=True):
    if text == "" or text is None:
        if required:
            raise SchemaError(f"{path}:{lineno}: empty {column}")
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"{path}:{lineno}: {column} is not a number: {text!r}") from None


def read_trace_csv(path, sample_period: float = 10.0) -> list:
    """Traces in first-appearance order of their sensor id."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"trace file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(TRACE_HEADER)}, got {','.join(header or [])!r}")
        cols = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACE_HEADER):
                raise SchemaError(f"{path}:{lineno}: expected {len(TRACE_HEADER)} cells, got {len(row)}")
            sid = row[1]
            if not sid:
                raise SchemaError(f"{path}:{lineno}: empty sensor_id")
            acc = cols.setdefault(sid, ([], [], [], []))
            acc[0].append(_cell(row[0], path, lineno, "timestamp_s"))
            acc[1].append(_cell(row[2], path, lineno, "tvoc_ppb"))
            acc[2].append(_cell(row[3], path, lineno, "temp_c", required=False))
            acc[3].append(_cell(row[4], path, lineno, "rh_pct", required=False))
    return [Trace(sid, t, c, tc, h, sample_period) for sid, (t, c, tc, h) in cols.items()]


# ---------------------------------------------------------------- manifests

def _sensor_to_dict(s: SensorSpec) -> dict:
    return {
        "sensor_id": s.sensor_id,
        "position_m": list(s.position),
        "distance_to_source_m": s.distance_to_source,
        "location": s.location,
        "attenuation_g": s.attenuation_g,
        "transport_delay_s": s.transport_delay_s,
        "range_ppb": list(s.range_ppb),
        "calibration_accuracy": s.calibration_accuracy,
        "read_noise_sigma": s.read_noise_sigma,
        "resolution": s.resolution,
    }


def _sensor_from_dict(d: dict) -> SensorSpec:
    return SensorSpec(
        sensor_id=str(d["sensor_id"]),
        position=tuple(d.get("position_m", (0.0, 0.0, 0.0))),
        distance_to_source=float(d.get("distance_to_source_m", 0.0)),
        attenuation_g=float(d.get("attenuation_g", 1.0)),
        transport_delay_s=float(d.get("transport_delay_s", 0.0)),
        range_ppb=tuple(d.get("range_ppb", (20.0, 36000.0))),
        calibration_accuracy=float(d.get("calibration_accuracy", 0.15)),
        read_noise_sigma=float(d.get("read_noise_sigma", 5.0)),
        resolution=float(d.get("resolution", 1.0)),
        location=str(d.get("location", "")),
    )


def protocol_to_list(p: ProtocolSpec) -> list:
    return [{"name": ph.name, "duration_s": ph.duration_s, "emission_multiplier": ph.emission_multiplier,
             "ventilation_multiplier": ph.ventilation_multiplier} for ph in p.phases]


def protocol_from_list(items) -> ProtocolSpec:
    return ProtocolSpec(tuple(Phase(str(d["name"]), float(d["duration_s"]), float(d.get("emission_multiplier", 1.0)),
                                    float(d.get("ventilation_multiplier", 1.0))) for d in items))


def trial_manifest(trial: TrialRecord, trace_file: str = None) -> dict:
    start, end = trial.protocol.exposure_window
    return {
        "trial_id": trial.trial_id,
        "label": trial.label.value,
        "dosage_ul": trial.dosage_ul,
        "start_iso8601": trial.start_iso8601,
        "exposure_start_s": start,
        "exposure_end_s": end,
        "room": {"volume_m3": trial.room.volume_V, "ventilation_m3_per_h": trial.room.ventilation_Q,
                 "baseline_ppb": trial.room.baseline_ppb},
        "sensors": [_sensor_to_dict(s) for s in trial.sensors],
        "protocol": protocol_to_list(trial.protocol),
        "source_F": trial.source_F,
        "trace_file": trace_file or f"{TRACE_DIR}/{trial.trial_id}.csv",
    }


_REQUIRED = ("trial_id", "label", "dosage_ul", "start_iso8601", "exposure_start_s", "exposure_end_s", "room", "sensors")


def _protocol_from_manifest(d: dict, total_s: float) -> ProtocolSpec:
    if "protocol" in d:
        return protocol_from_list(d["protocol"])
    # bare exports only give the exposure window; rebuild pre/exposure/settle around it
    start, end = float(d["exposure_start_s"]), float(d["exposure_end_s"])
    phases = []
    if start > 0:
        phases.append(Phase("pre_baseline", start, 0.0))
    phases.append(Phase("exposure", end - start, 1.0))
    if total_s > end:
        phases.append(Phase("settle", total_s - end, 0.0))
    return ProtocolSpec(tuple(phases))


def trial_from_manifest(d: dict, traces) -> TrialRecord:
    absent = [k for k in _REQUIRED if k not in d]
    if absent:
        raise SchemaError(f"trial manifest missing field(s): {', '.join(absent)}")
    room = d["room"]
    try:
        room_cfg = RoomConfig(float(room["volume_m3"]), float(room["ventilation_m3_per_h"]),
                              float(room.get("baseline_ppb", 150.0)))
    except KeyError as e:
        raise SchemaError(f"trial {d['trial_id']}: room missing {e.args[0]}") from None
    try:
        label = LabelClass.parse(d["label"])
    except ValueError as e:
        raise SchemaError(f"trial {d['trial_id']}: {e}") from None
    total = max((float(tr.t[-1]) for tr in traces if len(tr)), default=0.0)
    dosage = d["dosage_ul"]
    return TrialRecord(
        trial_id=str(d["trial_id"]),
        label=label,
        dosage_ul=None if dosage is None else int(dosage),
        traces=tuple(traces),
        protocol=_protocol_from_manifest(d, total),
        room=room_cfg,
        sensors=tuple(_sensor_from_dict(s) for s in d["sensors"]),
        start_iso8601=str(d["start_iso8601"]),
        source_F=d.get("source_F"),
    )


# ---------------------------------------------------------------- datasets

def write_dataset(dataset: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    (out / TRACE_DIR).mkdir(parents=True, exist_ok=True)
    entries = []
    for trial in dataset.trials:
        rel = f"{TRACE_DIR}/{trial.trial_id}.csv"
        _write_text(out / rel, traces_to_csv(trial.traces))
        entries.append(trial_manifest(trial, rel))
    _write_text(out / MANIFEST_NAME, json.dumps({"version": MANIFEST_VERSION, "trials": entries}, indent=2) + "\n")
    return out


def _load_manifest(root: Path) -> list:
    path = root / MANIFEST_NAME if root.is_dir() else root
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON ({e})") from None
    if isinstance(doc, dict) and "trials" in doc:
        entries = doc["trials"]
    elif isinstance(doc, list):
        entries = doc
    elif isinstance(doc, dict):
        entries = [doc]
    else:
        raise SchemaError(f"{path}: expected an object or list of trial manifests")
    return entries


def read_dataset(path) -> Dataset:
    """Load a dataset directory exactly as written (no resampling)."""
    root = Path(path)
    base = root if root.is_dir() else root.parent
    trials = []
    for d in _load_manifest(root):
        rel = d.get("trace_file", f"{TRACE_DIR}/{d.get('trial_id')}.csv")
        trials.append(trial_from_manifest(d, read_trace_csv(base / rel)))
    return Dataset(tuple(trials))


def ingest_dataset(path, period: float = 10.0, max_gap_s: float = 30.0):
    """Read, resample onto the sensor grid and validate every trace.

    Returns ``(dataset, reports)`` where ``reports`` lists one dict per trace.
    Raises :class:`ValidationFailed` naming each bad trial/sensor.
    """
    root = Path(path)
    base = root if root.is_dir() else root.parent
    trials, reports, problems = [], [], []
    for d in _load_manifest(root):
        tid = d.get("trial_id", "?")
        rel = d.get("trace_file", f"{TRACE_DIR}/{tid}.csv")
        fixed = []
        for tr in read_trace_csv(base / rel, period):
            out, rep = resample_to_grid(tr, period, max_gap_s)
            reports.append({"trial_id": tid, **rep.to_dict()})
            if not rep.valid:
                problems.append(f"{tid}/{tr.sensor_id}: {', '.join(sorted(set(rep.codes())))}")
            fixed.append(out)
        if any(p.startswith(f"{tid}/") for p in problems):
            continue
        try:
            trials.append(trial_from_manifest(d, fixed))
        except ValueError as e:
            if isinstance(e, SchemaError):
                raise
            problems.append(f"{tid}: {e}")
    if problems:
        raise ValidationFailed(f"{len(problems)} invalid trace(s): " + "; ".join(problems), problems)
    return Dataset(tuple(trials)), reports


# ---------------------------------------------------------------- reports

def emission_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EMISSION_HEADER)
    for r in rows:
        w.writerow([r.label, "" if r.dosage_ul is None else r.dosage_ul, r.sensor_id, repr(float(r.mean_F)),
                    r.unit, r.n_trials])
    return buf.getvalue()


def feature_matrix_to_csv(fm: FeatureMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial_id", "sensor_id", "label", *fm.columns])
    for tid, sid, lab, row in zip(fm.trial_ids, fm.sensor_ids, fm.labels, fm.values):
        w.writerow([tid, sid, lab, *(repr(float(v)) for v in row)])
    return buf.getvalue()


def read_feature_matrix_csv(path) -> FeatureMatrix:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"feature file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["trial_id", "sensor_id", "label"]:
            raise SchemaError(f"{path}: header must start with trial_id,sensor_id,label")
        rows = list(reader)
    values = np.array([[float(v) for v in r[3:]] for r in rows]) if rows else np.empty((0, len(header) - 3))
    return FeatureMatrix(tuple(r[0] for r in rows), tuple(r[1] for r in rows), tuple(r[2] for r in rows),
                         values, tuple(header[3:]))


def write_text(path, text: str):
    _write_text(path, text)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
