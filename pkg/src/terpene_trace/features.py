"""Trace descriptors, time-series features and top-k feature selection.

The catalog is fixed and ordered. Inputs to the scalar feature functions may
be a :class:`~terpene_trace.types.Trace` or any 1-D array of readings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from .exceptions import SingleClass, TraceTooShort, ZeroVariance
from .forest import TreeEnsembleClassifier
from .types import DEFAULT_SAMPLE_PERIOD, Trace

BASELINE_SAMPLES = 5
MIN_FEATURE_LENGTH = 12
ACF_LAGS = tuple(range(1, 8))

FEATURE_CATALOG = (
    "baseline_ppb",
    "delta_max_initial",
    "delta_final_initial",
    "max_slope_ppb_per_s",
    "min_slope_ppb_per_s",
    "auc_above_baseline",
    "mean",
    "median",
    "std",
    "skewness",
    "kurtosis",
    "minimum",
    "maximum",
    "value_range",
    *(f"acf_lag_{k}" for k in ACF_LAGS),
    "perm_entropy_m3_t1",
    "perm_entropy_norm_m3_t1",
    "perm_entropy_norm_m4_t1",
    "perm_entropy_norm_m5_t1",
    "apen_m2_r02",
    "apen_m2_r01",
    "apen_m3_r02",
    "time_to_max_s",
    "time_to_half_max_s",
    "final_over_max_ratio",
    "mean_abs_change",
    "mean_change",
    "cid_ce",
    "linear_trend_slope",
    "linear_trend_rvalue",
    "frac_above_mean",
    "longest_strike_above_mean_s",
    "n_peaks_3",
    "degenerate_variance",
)

FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_CATALOG)}


def _values(x) -> np.ndarray:
    if isinstance(x, Trace):
        return np.asarray(x.tvoc, dtype=float)
    return np.asarray(x, dtype=float).ravel()


def _period(x) -> float:
    return x.sample_period if isinstance(x, Trace) else DEFAULT_SAMPLE_PERIOD


def baseline(trace) -> float:
    """Median of the first five readings."""
    x = _values(trace)
    if x.size < BASELINE_SAMPLES:
        raise TraceTooShort(f"baseline needs {BASELINE_SAMPLES} samples, got {x.size}")
    return float(np.median(x[:BASELINE_SAMPLES]))


def trace_descriptors(trace) -> dict:
    """Baseline, amplitude and slope descriptors of a single trace."""
    x = _values(trace)
    dt = _period(trace)
    b = baseline(x)
    d_max = float(x.max() - b)
    d_final = float(x[-1] - b)
    if x.size >= 3:
        slopes = (x[2:] - x[:-2]) / (2 * dt)
        max_slope, min_slope = float(slopes.max()), float(slopes.min())
    else:
        max_slope = min_slope = 0.0
    excess = x - b
    if d_max > 0:
        half = int(np.argmax(excess >= 0.5 * d_max))
        time_to_half = half * dt
    else:
        time_to_half = 0.0
    return {
        "baseline_ppb": b,
        "delta_max_initial": d_max,
        "delta_final_initial": d_final,
        "max_slope_ppb_per_s": max_slope,
        "min_slope_ppb_per_s": min_slope,
        "auc_above_baseline": float(np.clip(excess, 0, None).sum() * dt),
        "time_to_max_s": float(np.argmax(x) * dt),
        "time_to_half_max_s": float(time_to_half),
        "final_over_max_ratio": d_final / d_max if d_max != 0 else 0.0,
    }


def autocorrelation(trace, lag: int) -> float:
    """Lag-``lag`` autocorrelation normalised by the full-series mean and variance."""
    x = _values(trace)
    n = x.size
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if n <= lag + 1:
        raise TraceTooShort(f"autocorrelation at lag {lag} needs more than {lag + 1} samples")
    mu = x.mean()
    var = np.mean((x - mu) ** 2)
    if var == 0:
        raise ZeroVariance("autocorrelation undefined for a constant series")
    return float(np.dot(x[:-lag] - mu, x[lag:] - mu) / ((n - lag) * var))


def permutation_entropy(trace, order: int = 3, delay: int = 1, normalize: bool = False) -> float:
    """Shannon entropy (nats) of ordinal-pattern frequencies.

    Patterns come from a stable argsort, so tied values rank by position and
    a constant stretch counts as the identity pattern.
    """
    x = _values(trace)
    if order < 2 or delay < 1:
        raise ValueError("need order >= 2 and delay >= 1")
    if x.size < order * delay + 1:
        raise TraceTooShort(f"permutation entropy needs >= {order * delay + 1} samples, got {x.size}")
    n_windows = x.size - (order - 1) * delay
    windows = np.stack([x[i * delay: i * delay + n_windows] for i in range(order)], axis=1)
    patterns = np.argsort(windows, axis=1, kind="stable")
    codes = patterns @ (order ** np.arange(order))
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    h = float(-np.sum(p * np.log(p)))
    h = max(h, 0.0) + 0.0  # clear a negative zero
    if normalize:
        return h / math.log(math.factorial(order))
    return h


def _chebyshev_stack(x, max_m):
    """Pairwise Chebyshev distances between length-m templates, for m = 1..max_m."""
    d1 = np.abs(x[:, None] - x[None, :])
    out = {1: d1}
    dm = d1
    for m in range(2, max_m + 1):
        dm = np.maximum(dm[:-1, :-1], d1[m - 1:, m - 1:])
        out[m] = dm
    return out


def _phi(dist, r):
    counts = np.count_nonzero(dist <= r, axis=1)
    return float(np.mean(np.log(counts / dist.shape[0])))


def approximate_entropy(trace, m: int = 2, r_factor: float = 0.2, _dists=None) -> float:
    """Approximate entropy with self-matches, tolerance ``r_factor * std``."""
    x = _values(trace)
    if x.size < m + 2:
        raise TraceTooShort(f"approximate entropy needs >= {m + 2} samples, got {x.size}")
    sd = float(np.std(x))
    if sd == 0:
        return 0.0
    r = r_factor * sd
    dists = _dists if _dists is not None else _chebyshev_stack(x, m + 1)
    return _phi(dists[m], r) - _phi(dists[m + 1], r)


def _longest_run(mask) -> int:
    best = run = 0
    for v in mask:
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def _n_peaks(x, support):
    """Points strictly greater than ``support`` neighbours on each side."""
    n = x.size
    if n < 2 * support + 1:
        return 0
    core = x[support:n - support]
    ok = np.ones(core.size, dtype=bool)
    for k in range(1, support + 1):
        ok &= core > x[support - k:n - support - k]
        ok &= core > x[support + k:n - support + k]
    return int(ok.sum())


def extract_features(trace) -> dict:
    """One finite value per catalog id, in catalog order.

    Features undefined for a constant series (autocorrelations, moments,
    trend correlation) are set to 0 and ``degenerate_variance`` is set to 1.
    """
    x = _values(trace)
    dt = _period(trace)
    if x.size < MIN_FEATURE_LENGTH:
        raise TraceTooShort(f"feature extraction needs >= {MIN_FEATURE_LENGTH} samples, got {x.size}")
    out = dict.fromkeys(FEATURE_CATALOG, 0.0)
    out.update(trace_descriptors(trace))

    mu = float(x.mean())
    centred = x - mu
    var = float(np.mean(centred ** 2))
    sd = math.sqrt(var)
    degenerate = var == 0
    out["mean"] = mu
    out["median"] = float(np.median(x))
    out["std"] = sd
    out["minimum"] = float(x.min())
    out["maximum"] = float(x.max())
    out["value_range"] = float(x.max() - x.min())
    diffs = np.diff(x)
    out["mean_abs_change"] = float(np.mean(np.abs(diffs)))
    out["mean_change"] = float((x[-1] - x[0]) / (x.size - 1))
    out["n_peaks_3"] = float(_n_peaks(x, 3))

    tt = np.arange(x.size) * dt
    tc = tt - tt.mean()
    out["linear_trend_slope"] = float(np.dot(tc, centred) / np.dot(tc, tc))

    if not degenerate:
        out["skewness"] = float(np.mean(centred ** 3) / sd ** 3)
        out["kurtosis"] = float(np.mean(centred ** 4) / var ** 2 - 3.0)
        for k in ACF_LAGS:
            out[f"acf_lag_{k}"] = autocorrelation(x, k)
        out["cid_ce"] = float(math.sqrt(np.sum((diffs / sd) ** 2)))
        out["linear_trend_rvalue"] = float(np.dot(tc, centred) / math.sqrt(np.dot(tc, tc) * np.dot(centred, centred)))
        above = x > mu
        out["frac_above_mean"] = float(np.mean(above))
        out["longest_strike_above_mean_s"] = float(_longest_run(above) * dt)

    out["perm_entropy_m3_t1"] = permutation_entropy(x, 3, 1)
    out["perm_entropy_norm_m3_t1"] = permutation_entropy(x, 3, 1, normalize=True)
    out["perm_entropy_norm_m4_t1"] = permutation_entropy(x, 4, 1, normalize=True)
    out["perm_entropy_norm_m5_t1"] = permutation_entropy(x, 5, 1, normalize=True)

    if not degenerate:
        dists = _chebyshev_stack(x, 4)
        out["apen_m2_r02"] = approximate_entropy(x, 2, 0.2, _dists=dists)
        out["apen_m2_r01"] = approximate_entropy(x, 2, 0.1, _dists=dists)
        out["apen_m3_r02"] = approximate_entropy(x, 3, 0.2, _dists=dists)
    out["degenerate_variance"] = 1.0 if degenerate else 0.0
    return out


def feature_vector(trace) -> np.ndarray:
    feats = extract_features(trace)
    return np.array([feats[name] for name in FEATURE_CATALOG])


# ---------------------------------------------------------------- matrices

@dataclass(frozen=True)
class FeatureMatrix:
    """Rows are traces; ``values`` columns follow ``columns`` (the catalog by default)."""

    trial_ids: tuple
    sensor_ids: tuple
    labels: tuple
    values: np.ndarray
    columns: tuple = FEATURE_CATALOG
    dosages: tuple = field(default=())

    def __post_init__(self):
        for name in ("trial_ids", "sensor_ids", "labels", "columns", "dosages"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        values = np.asarray(self.values, dtype=float).reshape(len(self.trial_ids), len(self.columns))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self.dosages:
            object.__setattr__(self, "dosages", (None,) * len(self.trial_ids))
        if not (len(self.sensor_ids) == len(self.labels) == len(self.dosages) == len(self.trial_ids)):
            raise ValueError("row metadata lengths differ")

    def __len__(self):
        return len(self.trial_ids)

    def subset(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        pick = lambda seq: tuple(seq[i] for i in rows)  # noqa: E731
        return FeatureMatrix(pick(self.trial_ids), pick(self.sensor_ids), pick(self.labels),
                             self.values[rows], self.columns, pick(self.dosages))

    def column(self, name) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


def dataset_features(dataset, n_jobs: int = 1) -> FeatureMatrix:
    """Extract catalog features for every trace of every trial in ``dataset``."""
    keys, traces = [], []
    for trial in dataset.trials:
        for tr in trial.traces:
            keys.append((trial.trial_id, tr.sensor_id, trial.label.value, trial.dosage_ul))
            traces.append(tr)
    if n_jobs in (None, 1):
        rows = [feature_vector(tr) for tr in traces]
    else:
        rows = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(feature_vector)(tr) for tr in traces)
    values = np.vstack(rows) if rows else np.empty((0, len(FEATURE_CATALOG)))
    return FeatureMatrix(
        tuple(k[0] for k in keys), tuple(k[1] for k in keys), tuple(k[2] for k in keys),
        values, FEATURE_CATALOG, tuple(k[3] for k in keys),
    )


class TraceFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer: sequence of traces (or 1-D arrays) -> catalog matrix."""

    def __init__(self, n_jobs=1):
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        self.n_features_out_ = len(FEATURE_CATALOG)
        return self

    def transform(self, X):
        if self.n_jobs in (None, 1):
            rows = [feature_vector(tr) for tr in X]
        else:
            rows = Parallel(n_jobs=self.n_jobs, prefer="threads")(delayed(feature_vector)(tr) for tr in X)
        return np.vstack(rows)

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_CATALOG, dtype=object)


def rank_features(X, y, seed=0, forest_params=None) -> np.ndarray:
    """Column indices sorted by forest importance (desc), ties by column order."""
    X, y = check_X_y(X, y, dtype=np.float64)
    if np.unique(y).size < 2:
        raise SingleClass("feature selection needs at least two classes")
    params = dict(forest_params or {})
    params["random_state"] = seed
    forest = TreeEnsembleClassifier(**params).fit(X, y)
    return np.argsort(-forest.feature_importances_, kind="stable"), forest.feature_importances_


def select_top_k(matrix, labels=None, k: int = 15, seed: int = 0, feature_names=None,
                 forest_params=None) -> list:
    """Ids of the ``k`` most important features (all of them if fewer exist).

    ``matrix`` is a :class:`FeatureMatrix` (labels default to its own) or a
    plain 2-D array with ``feature_names``.
    """
    if isinstance(matrix, FeatureMatrix):
        X = matrix.values
        names = list(matrix.columns)
        y = np.asarray(matrix.labels if labels is None else labels)
    else:
        X = np.asarray(matrix, dtype=float)
        names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(X.shape[1])]
        y = np.asarray(labels)
    if X.size == 0:
        raise ValueError("feature matrix is empty")
    order, _ = rank_features(X, y, seed, forest_params)
    return [names[i] for i in order[:min(k, len(names))]]


class TopKFeatureSelector(SelectorMixin, BaseEstimator):
    """Keep the ``k`` columns a seeded tree ensemble finds most important.

    Fitting only ever sees the rows passed to ``fit``, so the selection is
    free of test-set leakage when used inside a pipeline.
    """

    def __init__(self, k=15, random_state=0, forest_params=None):
        self.k = k
        self.random_state = random_state
        self.forest_params = forest_params

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        order, importances = rank_features(X, y, self.random_state, self.forest_params)
        self.n_features_in_ = X.shape[1]
        self.ranking_ = order
        self.importances_ = importances
        self.selected_ = np.sort(order[:min(self.k, X.shape[1])])
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "selected_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_] = True
        return mask
