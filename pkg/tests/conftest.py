import numpy as np
import pytest

from psvc.traceset import TraceSet


def make_traceset(traces, plaintexts=None, key=None, meta=None):
    traces = np.asarray(traces, dtype=np.float64)
    t = traces.shape[0]
    pts = np.zeros((t, 16), np.uint8) if plaintexts is None else np.asarray(plaintexts, np.uint8)
    return TraceSet(traces, pts, np.zeros((t, 16), np.uint8), key=key, meta=meta or {})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
