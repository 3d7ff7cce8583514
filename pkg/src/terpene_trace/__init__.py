"""Simulate, ingest and classify low-cost TVOC sensor traces of terpene sources."""

from .classify import ForestParams, Pipeline, TASKS, get_task, rank_placements, run_task
from .exceptions import TerpeneTraceError
from .features import FEATURE_CATALOG, TopKFeatureSelector, TraceFeatureExtractor, extract_features
from .forest import TreeEnsembleClassifier
from .physics import concentration_at, emission_rate, trial_emission_rate, well_mixed
from .simulator import DatasetConfig, generate_dataset, get_scenario, preset_library
from .types import Dataset, LabelClass, RoomConfig, SensorSpec, Trace, TrialRecord

__version__ = "0.1.0"
