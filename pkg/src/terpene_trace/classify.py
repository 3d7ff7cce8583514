"""Classification tasks, train/test protocol, metrics and sensor-placement ranking."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.metrics import accuracy_score, precision_recall_fscore_support
from sklearn.model_selection import StratifiedGroupKFold, train_test_split

from .exceptions import ClassTooSmall, MissingFeature, SingleClass, UnknownName
from .features import FEATURE_CATALOG, FeatureMatrix, dataset_features, select_top_k
from .forest import TreeEnsembleClassifier
from .types import Dataset, LabelClass, TERPENE_LABELS, canonical_class_order

MIN_ROWS_PER_CLASS = 5
FAR_THRESHOLD_M = 2.0
CLASSIFIER_NAME = "random_forest"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    features_per_split: object = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")

    def estimator(self, n_jobs: int = 1) -> TreeEnsembleClassifier:
        return TreeEnsembleClassifier(
            n_trees=self.n_trees, max_depth=self.max_depth, min_samples_split=self.min_samples_split,
            max_features=self.features_per_split, bootstrap=self.bootstrap,
            random_state=self.seed, n_jobs=n_jobs,
        )

    def forest_kwargs(self) -> dict:
        return dict(n_trees=self.n_trees, max_depth=self.max_depth, min_samples_split=self.min_samples_split,
                    max_features=self.features_per_split, bootstrap=self.bootstrap)


@dataclass(frozen=True)
class Pipeline:
    k: int = 15
    forest: ForestParams = field(default_factory=ForestParams)
    test_fraction: float = 0.2
    seed: int = 0
    # keep every trace of a trial on one side of the split
    group_by_trial: bool = True
    n_jobs: int = 1

    def with_seed(self, seed: int) -> "Pipeline":
        return Pipeline(self.k, ForestParams(**{**asdict(self.forest), "seed": seed}),
                        self.test_fraction, seed, self.group_by_trial, self.n_jobs)


# ---------------------------------------------------------------- tasks

def _dosage_class(label, dosage):
    return f"{dosage}uL"


@dataclass(frozen=True)
class TaskDef:
    """A labelled comparison.

    ``relabel`` maps a source label to its class name (unmapped labels keep
    their own name). ``by_dosage`` makes the dosage the class instead.
    """

    name: str
    title: str
    labels: tuple
    relabel: tuple = ()
    dosage_filter: Optional[tuple] = None
    by_dosage: bool = False

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(LabelClass.parse(x) for x in self.labels))
        object.__setattr__(self, "relabel", tuple((LabelClass.parse(a), b) for a, b in self.relabel))
        n_classes = len(self.dosage_filter or ()) if self.by_dosage else len(set(self.class_of(l, None) for l in self.labels))
        if n_classes < 2:
            raise ValueError(f"task {self.name!r} defines fewer than two classes")

    def class_of(self, label, dosage):
        if self.by_dosage:
            return _dosage_class(label, dosage)
        label = LabelClass.parse(label)
        return dict(self.relabel).get(label, label.value)

    def includes(self, label, dosage) -> bool:
        if LabelClass.parse(label) not in self.labels:
            return False
        return self.dosage_filter is None or dosage in self.dosage_filter

    @property
    def classes(self) -> list:
        if self.by_dosage:
            return canonical_class_order(_dosage_class(None, d) for d in self.dosage_filter)
        return canonical_class_order({self.class_of(l, None) for l in self.labels})


_L = LabelClass
_CHEM = tuple((lab, "Chemical") for lab in TERPENE_LABELS)
_PLANT = ((_L.BasilPlant, "Plant"), (_L.BasilStressed, "Plant"))

TASKS = {t.name: t for t in (
    TaskDef("all_chemicals_vs_control", "All Chemicals vs Control", (_L.Control, *TERPENE_LABELS), _CHEM),
    TaskDef("cisbeta_vs_control", "Cis-Beta Ocimene vs Control", (_L.Control, _L.CisBetaOcimene)),
    TaskDef("dlimonene_vs_control", "D-Limonene vs Control", (_L.Control, _L.DLimonene)),
    TaskDef("citral_vs_control", "Citral vs Control", (_L.Control, _L.Citral)),
    TaskDef("alphaterpinene_vs_control", "Alpha-Terpinene vs Control", (_L.Control, _L.AlphaTerpinene)),
    TaskDef("dlimonene_dosages", "D-Limonene Dosages", (_L.DLimonene,), dosage_filter=(100, 200), by_dosage=True),
    TaskDef("all_chemicals", "All Chemicals", TERPENE_LABELS),
    TaskDef("dlim_cisbeta_aterp", "D-Lim vs Cis-Beta vs A-Terp", (_L.DLimonene, _L.CisBetaOcimene, _L.AlphaTerpinene)),
    TaskDef("dlim_cisbeta_citral", "D-Lim vs Cis-Beta vs Citral", (_L.DLimonene, _L.CisBetaOcimene, _L.Citral)),
    TaskDef("dlim_vs_cisbeta", "D-Lim vs Cis-Beta Ocimene", (_L.DLimonene, _L.CisBetaOcimene)),
    TaskDef("plants_vs_control", "Plants vs Control", (_L.Control, _L.BasilPlant, _L.BasilStressed), _PLANT),
    TaskDef("dlimonene_vs_citral", "D-Limonene vs Citral", (_L.DLimonene, _L.Citral)),
    TaskDef("basil_stressed_vs_basil_plant", "Basil Stressed vs Basil Plant", (_L.BasilStressed, _L.BasilPlant)),
)}


def get_task(name: str) -> TaskDef:
    if name not in TASKS:
        raise UnknownName(f"unknown task {name!r}; valid tasks: {', '.join(TASKS)}")
    return TASKS[name]


def parse_tasks(spec) -> list:
    """``"all"`` or a comma-separated list of task names."""
    if isinstance(spec, str):
        spec = [s.strip() for s in spec.split(",") if s.strip()]
    if list(spec) == ["all"]:
        return list(TASKS.values())
    return [get_task(s) for s in spec]


def task_view(matrix: FeatureMatrix, task: TaskDef):
    """Rows of ``matrix`` that belong to ``task`` and their class names."""
    rows = [i for i, (lab, dose) in enumerate(zip(matrix.labels, matrix.dosages)) if task.includes(lab, dose)]
    sub = matrix.subset(rows)
    y = np.array([task.class_of(lab, dose) for lab, dose in zip(sub.labels, sub.dosages)], dtype=object)
    return sub, y


def task_available(matrix: FeatureMatrix, task: TaskDef) -> bool:
    _, y = task_view(matrix, task)
    return len(set(y)) >= 2


# ---------------------------------------------------------------- protocol

def split_dataset(X, labels, test_fraction: float = 0.2, seed: int = 0, groups=None):
    """Stratified train/test split; returns ``(train_idx, test_idx)``, each sorted.

    With ``groups`` every group lands wholly on one side: the test side is
    the first fold of a shuffled stratified group k-fold (k = 1/test_fraction)
    that leaves every class on both sides, falling back to drawing whole
    groups per class when no fold qualifies.
    """
    y = np.asarray(labels, dtype=object)
    n = y.size
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    classes, counts = np.unique(y.astype(str), return_counts=True)
    if classes.size < 2:
        raise SingleClass("split needs at least two classes")
    small = [(c, int(k)) for c, k in zip(classes, counts) if k < MIN_ROWS_PER_CLASS]
    if small:
        desc = ", ".join(f"{c} ({k})" for c, k in small)
        raise ClassTooSmall(f"classes need >= {MIN_ROWS_PER_CLASS} rows each; too small: {desc}")
    idx = np.arange(n)
    # sklearn wants a 32-bit state; seeds here may be any u64
    seed = int(np.random.SeedSequence(seed).generate_state(1)[0])
    if groups is None:
        train, test = train_test_split(idx, test_size=test_fraction, random_state=seed,
                                       stratify=y.astype(str), shuffle=True)
        return np.sort(train), np.sort(test)

    groups = np.asarray(groups)
    n_splits = max(2, int(round(1.0 / test_fraction)))
    cv = StratifiedGroupKFold(n_splits=n_splits, shuffle=True, random_state=seed)
    ys = y.astype(str)
    # folds are tried in order; the first with every class on both sides wins
    for train, test in cv.split(idx.reshape(-1, 1), ys, groups):
        if set(ys[train]) == set(classes) == set(ys[test]):
            return np.sort(train), np.sort(test)
    few = sorted(str(c) for c in classes if np.unique(groups[ys == c]).size < 2)
    if not few:
        return _per_class_group_split(ys, groups, classes, test_fraction, seed)
    raise ClassTooSmall("no grouped split puts every class in both partitions"
                        + (f"; classes with a single trial: {', '.join(few)}" if few else ""))


def _per_class_group_split(ys, groups, classes, test_fraction, seed):
    # few trials per class: draw round(f * n) whole groups per class, clamped to [1, n - 1]
    rng = np.random.default_rng(seed)
    test_groups = []
    for c in classes:
        g = np.unique(groups[ys == c])
        k = min(max(int(round(test_fraction * g.size)), 1), g.size - 1)
        test_groups.extend(rng.permutation(g)[:k].tolist())
    mask = np.isin(groups, test_groups)
    idx = np.arange(ys.size)
    train, test = idx[~mask], idx[mask]
    if not set(ys[train]) == set(classes) == set(ys[test]):
        raise ClassTooSmall("no grouped split puts every class in both partitions")
    return train, test


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {"acc": self.accuracy, "pre": self.precision, "rec": self.recall,
                "f1": self.f1, "support": self.support}


def compute_metrics(y_true, y_pred) -> Metrics:
    y_true = np.asarray(y_true, dtype=object).astype(str)
    y_pred = np.asarray(y_pred, dtype=object).astype(str)
    if y_true.size == 0:
        raise ValueError("cannot evaluate on an empty test set")
    pre, rec, f1, _ = precision_recall_fscore_support(y_true, y_pred, average="weighted", zero_division=0)
    return Metrics(float(accuracy_score(y_true, y_pred)), float(pre), float(rec), float(f1), int(y_true.size))


@dataclass(frozen=True)
class Model:
    """A fitted ensemble bound to the feature ids it was trained on."""

    estimator: TreeEnsembleClassifier
    features: tuple

    @property
    def classes(self) -> list:
        return list(self.estimator.classes_)

    def _matrix(self, X, columns=None) -> np.ndarray:
        if isinstance(X, FeatureMatrix):
            X, columns = X.values, X.columns
        X = np.asarray(X, dtype=float)
        if columns is None:
            if X.shape[-1] != len(self.features):
                raise ValueError(f"expected {len(self.features)} columns, got {X.shape[-1]}")
            return X
        columns = list(columns)
        absent = [f for f in self.features if f not in columns]
        if absent:
            raise MissingFeature(f"input lacks selected feature(s): {', '.join(absent)}")
        return X[..., [columns.index(f) for f in self.features]]


def train_forest(X, y, params: ForestParams = ForestParams(), features=None, n_jobs: int = 1) -> Model:
    X = np.asarray(X, dtype=float)
    features = tuple(features) if features is not None else tuple(f"f{i}" for i in range(X.shape[1]))
    est = params.estimator(n_jobs).fit(X, np.asarray(y, dtype=object).astype(str))
    return Model(est, features)


def predict(model: Model, vector) -> tuple:
    """``(label, {class: probability})`` for one feature vector.

    ``vector`` is a mapping of feature id to value, or a sequence already in
    the model's feature order.
    """
    if hasattr(vector, "keys"):
        absent = [f for f in model.features if f not in vector]
        if absent:
            raise MissingFeature(f"vector lacks selected feature(s): {', '.join(absent)}")
        row = np.array([[float(vector[f]) for f in model.features]])
    else:
        row = model._matrix(np.asarray(vector, dtype=float).reshape(1, -1))
    proba = model.estimator.predict_proba(row)[0]
    classes = model.classes
    return classes[int(np.argmax(proba))], {c: float(p) for c, p in zip(classes, proba)}


def evaluate(model: Model, X, y, columns=None) -> Metrics:
    pred = model.estimator.predict(model._matrix(X, columns))
    return compute_metrics(y, pred)


# ---------------------------------------------------------------- reports

def _round(x, nd=6):
    return float(round(x, nd))


@dataclass(frozen=True)
class TaskReport:
    task: str
    title: str
    classes: tuple
    params: dict
    selected_features: tuple
    metrics: Metrics
    seed: int
    n_train: int
    classifier: str = CLASSIFIER_NAME

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "classifier": self.classifier,
            "params": self.params,
            "selected_features": list(self.selected_features),
            "metrics": {k: (_round(v) if isinstance(v, float) else v) for k, v in self.metrics.to_dict().items()},
            "seed": self.seed,
            "classes": list(self.classes),
            "n_train": self.n_train,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


TASK_CSV_HEADER = ("Test", "RF_Acc", "RF_Pre", "RF_Rec", "RF_F1", "Support")


def task_csv_row(title: str, m: Metrics) -> list:
    return [title, f"{round(m.accuracy * 100):d}%", f"{m.precision:.2f}", f"{m.recall:.2f}", f"{m.f1:.2f}", str(m.support)]


def tasks_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TASK_CSV_HEADER)
    for r in reports:
        w.writerow(task_csv_row(r.title, r.metrics))
    return buf.getvalue()


def _as_matrix(data, n_jobs=1) -> FeatureMatrix:
    if isinstance(data, FeatureMatrix):
        return data
    if isinstance(data, Dataset):
        return dataset_features(data, n_jobs=n_jobs)
    raise TypeError("expected a Dataset or FeatureMatrix")


def run_task(data, task: TaskDef, pipeline: Pipeline = Pipeline()) -> TaskReport:
    """Filter/relabel, select top-k on the train rows only, fit and evaluate."""
    matrix = _as_matrix(data, pipeline.n_jobs)
    sub, y = task_view(matrix, task)
    if len(set(y)) < 2:
        present = sorted(set(y)) or ["none"]
        raise SingleClass(f"task {task.name!r} needs classes {task.classes}; data holds {present}")
    groups = np.asarray(sub.trial_ids) if pipeline.group_by_trial else None
    train, test = split_dataset(sub.values, y, pipeline.test_fraction, pipeline.seed, groups)

    fkw = pipeline.forest.forest_kwargs()
    chosen = select_top_k(sub.values[train], y[train], k=pipeline.k, seed=pipeline.forest.seed,
                          feature_names=sub.columns, forest_params={**fkw, "n_jobs": pipeline.n_jobs})
    cols = [sub.columns.index(f) for f in chosen]
    model = train_forest(sub.values[train][:, cols], y[train], pipeline.forest, chosen, pipeline.n_jobs)
    metrics = evaluate(model, sub.values[test][:, cols], y[test])
    params = {"k": pipeline.k, "test_fraction": pipeline.test_fraction,
              "group_by_trial": pipeline.group_by_trial, **asdict(pipeline.forest)}
    return TaskReport(task.name, task.title, tuple(model.classes), params, tuple(chosen),
                      metrics, pipeline.seed, int(train.size))


# ---------------------------------------------------------------- placement

@dataclass(frozen=True)
class PlacementRow:
    sensor_id: str
    location: str
    distance_to_source_m: float
    accuracy: float


@dataclass(frozen=True)
class PlacementReport:
    task: str
    rows: tuple
    recommendation: Optional[str]
    far_threshold_m: float
    seed: int
    params: dict

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "classifier": CLASSIFIER_NAME,
            "params": self.params,
            "seed": self.seed,
            "far_threshold_m": self.far_threshold_m,
            "recommendation": self.recommendation,
            "ranking": [{"sensor_id": r.sensor_id, "location": r.location,
                         "distance_to_source_m": r.distance_to_source_m, "accuracy": _round(r.accuracy)}
                        for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def recommendation_line(self) -> str:
        if self.recommendation is None:
            return f"no sensor at >= {self.far_threshold_m:g} m; closest-ranked is {self.rows[0].sensor_id}"
        row = next(r for r in self.rows if r.sensor_id == self.recommendation)
        return (f"recommended placement: {row.sensor_id} ({row.location or 'unnamed'}), "
                f"{row.distance_to_source_m:g} m from the source, accuracy {row.accuracy:.2f}")


PLACEMENT_CSV_HEADER = ("sensor_location", "symbol", "ml_accuracy", "distance_to_source_m")


def placement_to_csv(report: PlacementReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLACEMENT_CSV_HEADER)
    for r in report.rows:
        w.writerow([r.location, r.sensor_id, f"{r.accuracy:.2f}", f"{r.distance_to_source_m:g}"])
    return buf.getvalue()


def _sensor_meta(dataset: Dataset) -> dict:
    meta = {}
    for trial in dataset.trials:
        for s in trial.sensors:
            meta.setdefault(s.sensor_id, (s.location or "", float(s.distance_to_source)))
    return meta


def rank_placements(data, task: TaskDef = None, pipeline: Pipeline = Pipeline(), *,
                    sensor_meta: Optional[dict] = None, far_threshold_m: float = FAR_THRESHOLD_M) -> PlacementReport:
    """Accuracy of ``task`` using one sensor's traces at a time.

    Rows are sorted by accuracy (desc), then distance (desc), then id. The
    recommendation is the best-ranked sensor at least ``far_threshold_m``
    from the source.
    """
    task = task or TASKS["all_chemicals"]
    if isinstance(data, Dataset):
        sensor_meta = {**_sensor_meta(data), **(sensor_meta or {})}
    matrix = _as_matrix(data, pipeline.n_jobs)
    sensor_meta = sensor_meta or {}
    sensor_ids = list(dict.fromkeys(matrix.sensor_ids))
    rows = []
    for sid in sensor_ids:
        sub = matrix.subset(np.array([s == sid for s in matrix.sensor_ids]))
        report = run_task(sub, task, pipeline)
        loc, dist = sensor_meta.get(sid, ("", float("nan")))
        rows.append(PlacementRow(sid, loc, dist, report.metrics.accuracy))
    # ties favour the farther sensor; unknown distances sort last
    rows.sort(key=lambda r: (-r.accuracy, -np.nan_to_num(r.distance_to_source_m, nan=-np.inf), r.sensor_id))
    far = [r for r in rows if r.distance_to_source_m >= far_threshold_m]
    params = {"k": pipeline.k, "test_fraction": pipeline.test_fraction, **asdict(pipeline.forest)}
    return PlacementReport(task.name, tuple(rows), far[0].sensor_id if far else None,
                           far_threshold_m, pipeline.seed, params)


__all__ = [
    "ForestParams", "Pipeline", "TaskDef", "TASKS", "get_task", "parse_tasks", "task_view", "task_available",
    "split_dataset", "Metrics", "compute_metrics", "Model", "train_forest", "predict", "evaluate",
    "TaskReport", "tasks_to_csv", "task_csv_row", "TASK_CSV_HEADER", "run_task", "PlacementRow",
    "PlacementReport", "placement_to_csv", "PLACEMENT_CSV_HEADER", "rank_placements", "FEATURE_CATALOG",
]
