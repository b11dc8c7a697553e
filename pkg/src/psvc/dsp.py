"""Trace conditioning: detrending, moving-average filters, alignment,
group averaging and SNR estimation."""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (EmptySet, GroupMismatch, InsufficientSamples,
                     MixedPlaintextGroup, WindowTooLarge, ZeroNoise)
from .traceset import TraceSet

LOWPASS = "lowpass"
HIGHPASS = "highpass"


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    window: int

    def __post_init__(self):
        if self.kind not in (LOWPASS, HIGHPASS):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("filter window must be a positive odd integer")


@dataclass(frozen=True)
class SnrReport:
    snr_db: float
    signal_power: float
    noise_power: float


def detrend_linear(trace):
    """Subtract the least-squares line from ``trace`` (last axis)."""
    x = np.asarray(trace, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise InsufficientSamples(f"detrending needs at least 2 samples, got {n}")
    t = np.arange(n, dtype=np.float64)
    t -= t.mean()
    xc = x - x.mean(axis=-1, keepdims=True)
    slope = (xc @ t) / (t @ t)
    return xc - np.multiply.outer(slope, t)


def moving_average(trace, window):
    """Centred moving average; near the edges the window shrinks
    symmetrically instead of padding."""
    x = np.asarray(trace, dtype=np.float64)
    n = x.shape[-1]
    if window > n:
        raise WindowTooLarge(f"window {window} exceeds trace length {n}")
    idx = np.arange(n)
    half = np.minimum(window // 2, np.minimum(idx, n - 1 - idx))
    csum = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x, axis=-1)], axis=-1)
    lo, hi = idx - half, idx + half + 1
    return (csum[..., hi] - csum[..., lo]) / (2 * half + 1)


def filter_trace(trace, spec: FilterSpec):
    low = moving_average(trace, spec.window)
    if spec.kind == LOWPASS:
        return low
    return np.asarray(trace, dtype=np.float64) - low


def _chain(meta, step):
    meta = dict(meta)
    prior = meta.get("filter_chain")
    meta["filter_chain"] = f"{prior},{step}" if prior else step
    return meta


def detrend_traces(ts: TraceSet) -> TraceSet:
    if ts.trace_count == 0:
        return ts
    return ts.replace(traces=detrend_linear(ts.traces), meta=_chain(ts.meta, "detrend"))


def filter_traces(ts: TraceSet, spec: FilterSpec) -> TraceSet:
    if ts.trace_count == 0:
        return ts
    return ts.replace(traces=filter_trace(ts.traces, spec),
                      meta=_chain(ts.meta, f"{spec.kind}:{spec.window}"))


def _best_lag(ref, trace, max_lag):
    best, best_score = 0, None
    # candidates ordered 0, -1, +1, -2, +2, ... so ties keep the smallest shift
    for lag in sorted(range(-max_lag, max_lag + 1), key=lambda v: (abs(v), v)):
        score = float(np.dot(ref, np.roll(trace, lag)))
        if best_score is None or score > best_score:
            best, best_score = lag, score
    return best


def align(ts: TraceSet, reference_index: int = 0, max_lag: int = 0) -> TraceSet:
    """Circularly shift each trace by the lag (within ``max_lag``) that
    maximises its cross-correlation with the reference trace."""
    if ts.trace_count == 0:
        raise EmptySet("cannot align an empty trace set")
    if not 0 <= reference_index < ts.trace_count:
        raise IndexError(f"reference index {reference_index} out of range")
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    x = ts.traces.astype(np.float64)
    ref = x[reference_index] - x[reference_index].mean()
    lags = []
    out = np.empty_like(x)
    for i, row in enumerate(x):
        lag = _best_lag(ref, row - row.mean(), max_lag) if max_lag else 0
        lags.append(lag)
        out[i] = np.roll(row, lag)
    meta = _chain(ts.meta, f"align:{max_lag}")
    meta["align_lags"] = json.dumps(lags, separators=(",", ":"))
    return ts.replace(traces=out, meta=meta)


def average(ts: TraceSet, n: int) -> TraceSet:
    """Avg(n): mean of each run of ``n`` consecutive traces sharing one
    plaintext."""
    if n < 1:
        raise ValueError("group size must be >= 1")
    t = ts.trace_count
    if t % n:
        raise GroupMismatch(
            f"{t} traces cannot be split into groups of {n}; "
            f"capture with a plaintext repeat count that is a multiple of {n}")
    if n == 1:
        return ts
    g = t // n
    pts = ts.plaintexts.reshape(g, n, 16)
    if not (pts == pts[:, :1]).all():
        bad = int(np.flatnonzero(~(pts == pts[:, :1]).all(axis=(1, 2)))[0])
        raise MixedPlaintextGroup(
            f"group {bad} (traces {bad * n}..{bad * n + n - 1}) mixes plaintexts; "
            f"averaging needs each run of {n} traces to repeat one plaintext")
    x = ts.traces.astype(np.float64).reshape(g, n, ts.sample_count)
    meta = _chain(ts.meta, f"avg:{n}")
    return ts.replace(traces=x.mean(axis=1), plaintexts=pts[:, 0],
                      ciphertexts=ts.ciphertexts.reshape(g, n, 16)[:, 0], meta=meta)


def estimate_snr(traces, signature: Optional[np.ndarray] = None) -> SnrReport:
    """Signal power over noise power, in dB.

    Empirical mode (no ``signature``): all traces record the same
    computation, the per-sample mean is the signal estimate and the
    residuals around it are noise. Oracle mode: ``signature`` is the known
    noise-free trace.
    """
    if isinstance(traces, TraceSet):
        if signature is None and traces.trace_count > 1 and \
                not (traces.plaintexts == traces.plaintexts[0]).all():
            raise MixedPlaintextGroup("empirical SNR needs traces of a single plaintext")
        x = traces.traces.astype(np.float64)
    else:
        x = np.asarray(traces, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("SNR estimation needs at least 2 traces")
    if signature is None:
        mean = x.mean(axis=0)
        signal = float(np.var(mean))
        noise = float(np.var(x, axis=0, ddof=1).mean())
    else:
        sig = np.asarray(signature, dtype=np.float64)
        signal = float(np.var(sig))
        noise = float(np.mean((x - sig) ** 2))
    if noise <= 0.0:
        raise ZeroNoise("noise power is zero; SNR is undefined")
    return SnrReport(float(10.0 * np.log10(signal / noise)), signal, noise)


def segment_means(trace, samples_per_op):
    x = np.asarray(trace, dtype=np.float64)
    return x[: len(x) // samples_per_op * samples_per_op].reshape(-1, samples_per_op).mean(axis=1)


def count_peaks(values):
    """Number of strict interior local maxima."""
    v = np.asarray(values, dtype=np.float64)
    return int(((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])).sum())
