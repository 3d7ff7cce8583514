import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from terpene_trace.types import Trace  # noqa: E402


def make_trace(values, sensor_id="S1", period=10.0, t0=0.0):
    values = np.asarray(values, dtype=float)
    return Trace(sensor_id, t0 + period * np.arange(values.size), values, sample_period=period)


@pytest.fixture
def trace_factory():
    return make_trace


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
