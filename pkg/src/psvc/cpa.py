"""Correlation power analysis against a single AES key byte."""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numba
import numpy as np

from .aes import HW, SBOX
from .errors import InsufficientTraces, MissingPrevState, ZeroVariance
from .traceset import TraceSet

XOR_HW = "xor_hw"
SBOX_HW = "sbox_hw"
HD = "hd"
XOR_VALUE = "xor_value"
KINDS = (XOR_HW, SBOX_HW, HD, XOR_VALUE)

_HW = np.frombuffer(HW, dtype=np.uint8)
_SBOX = np.frombuffer(SBOX, dtype=np.uint8)

# columns processed per accumulation block; keeps the 256 x block
# accumulator cache-resident
_BLOCK = 256


@dataclass(frozen=True)
class SelectionModel:
    kind: str = SBOX_HW
    target_byte: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown selection kind {self.kind!r}")
        if not 0 <= self.target_byte < 16:
            raise ValueError("target_byte must be in 0..15")


@dataclass
class CorrelationMatrix:
    values: np.ndarray          # 256 x S, Pearson r per key guess and sample
    model: SelectionModel
    trace_count: int
    window: Tuple[int, int]
    dead_samples: np.ndarray    # sample indices (absolute) with no trace variance
    dead_guesses: np.ndarray    # guesses whose hypothesis column is constant


@dataclass
class GuessSummary:
    r: np.ndarray               # max over time of |r| per guess
    argmax_time: np.ndarray     # absolute sample index of that maximum
    model: Optional[SelectionModel] = None

    @property
    def best_guess(self) -> int:
        return int(np.argmax(self.r))


def select_value(pt_byte: int, key_guess: int, model, prev_byte: Optional[int] = None) -> int:
    """Hypothetical leakage of one (plaintext byte, key guess) pair."""
    kind = model.kind if isinstance(model, SelectionModel) else model
    v = (pt_byte ^ key_guess) & 0xFF
    if kind == XOR_HW:
        return int(_HW[v])
    if kind == SBOX_HW:
        return int(_HW[_SBOX[v]])
    if kind == XOR_VALUE:
        return v
    if kind == HD:
        if prev_byte is None:
            raise MissingPrevState("the Hamming-distance model needs the previous state byte")
        return int(_HW[(prev_byte ^ _SBOX[v]) & 0xFF])
    raise ValueError(f"unknown selection kind {kind!r}")


def hypothesis_table(kind: str) -> np.ndarray:
    """256 x 256 table: row = plaintext byte, column = key guess.

    For the HD model the previous state is the S-box input, so the value is
    HD(pt ^ k, sbox(pt ^ k)).
    """
    v = np.arange(256, dtype=np.uint8)[:, None] ^ np.arange(256, dtype=np.uint8)[None, :]
    if kind == XOR_HW:
        return _HW[v]
    if kind == SBOX_HW:
        return _HW[_SBOX[v]]
    if kind == XOR_VALUE:
        return v.copy()
    if kind == HD:
        return _HW[v ^ _SBOX[v]]
    raise ValueError(f"unknown selection kind {kind!r}")


def _centre(x):
    # two-pass: sequential column sums, then subtract the mean
    acc = x[0].copy()
    for row in x[1:]:
        acc += row
    return x - acc / x.shape[0]


def _sumsq(xc):
    acc = xc[0] * xc[0]
    for row in xc[1:]:
        acc += row * row
    return acc


@numba.njit(cache=True, error_model="numpy")
def _cross(xc, yc):
    t, k = xc.shape
    s = yc.shape[1]
    out = np.zeros((k, s))
    for lo in range(0, s, _BLOCK):
        hi = min(s, lo + _BLOCK)
        for i in range(t):
            yrow = yc[i, lo:hi]
            for a in range(k):
                xv = xc[i, a]
                orow = out[a, lo:hi]
                for b in range(hi - lo):
                    orow[b] += xv * yrow[b]
    return out


def correlate(x, y):
    """Pearson r between every column of ``x`` (T x K) and every column of
    ``y`` (T x S). Columns with zero variance give 0.0.

    Accumulation runs over traces in order, element by element, so the result
    is identical to a plain two-pass loop evaluation of the textbook formula.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc, yc = _centre(x), _centre(y)
    num = _cross(np.ascontiguousarray(xc), np.ascontiguousarray(yc))
    den = np.sqrt(np.multiply.outer(_sumsq(xc), _sumsq(yc)))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / den
    r[den == 0] = 0.0
    return np.clip(r, -1.0, 1.0)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson needs two equal-length vectors of at least 2 samples")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("one of the inputs is constant")
    return max(-1.0, min(1.0, float(xc @ yc) / np.sqrt(sxx * syy)))


def run_cpa(traces: TraceSet, model: SelectionModel = SelectionModel(),
            time_window: Optional[Tuple[int, int]] = None) -> Tuple[CorrelationMatrix, GuessSummary]:
    t = traces.trace_count
    if t < 2:
        raise InsufficientTraces(f"CPA needs at least 2 traces, got {t}")
    s = traces.sample_count
    t0, t1 = (0, s) if time_window is None else time_window
    if not 0 <= t0 < t1 <= s:
        raise ValueError(f"time window [{t0}, {t1}) outside [0, {s})")
    y = traces.traces[:, t0:t1].astype(np.float64)
    x = hypothesis_table(model.kind)[traces.plaintexts[:, model.target_byte]].astype(np.float64)
    values = correlate(x, y)
    dead_samples = np.flatnonzero((y == y[0]).all(axis=0)) + t0
    dead_guesses = np.flatnonzero((x == x[0]).all(axis=0))
    cm = CorrelationMatrix(values, model, t, (t0, t1), dead_samples, dead_guesses)
    return cm, summarize(cm)


def summarize(cm: CorrelationMatrix) -> GuessSummary:
    a = np.abs(cm.values)
    at = np.argmax(a, axis=1)
    return GuessSummary(a[np.arange(a.shape[0]), at], at + cm.window[0], cm.model)


def run_cpa_all_bytes(traces: TraceSet, kind: str = SBOX_HW,
                      time_window: Optional[Tuple[int, int]] = None) -> List[GuessSummary]:
    return [run_cpa(traces, SelectionModel(kind, b), time_window)[1] for b in range(16)]
