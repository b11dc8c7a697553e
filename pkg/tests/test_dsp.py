import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import make_traceset
from psvc import dsp
from psvc.errors import (EmptySet, GroupMismatch, InsufficientSamples,
                         MixedPlaintextGroup, WindowTooLarge, ZeroNoise)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vectors = arrays(np.float64, st.integers(2, 200), elements=finite)


def test_detrend_exact_cases():
    np.testing.assert_allclose(dsp.detrend_linear([0, 1, 2, 3]), 0, atol=1e-12)
    np.testing.assert_allclose(dsp.detrend_linear([5, 5, 5]), 0, atol=1e-12)
    with pytest.raises(InsufficientSamples):
        dsp.detrend_linear([1.0])


def test_detrend_recovers_sine_under_ramp():
    n = np.arange(1000)
    sine = np.sin(2 * np.pi * n / 50)
    residual = dsp.detrend_linear(sine + 0.03 * n - 4)
    assert np.corrcoef(residual, sine)[0, 1] >= 0.999


def _fit(x):
    n = np.arange(len(x))
    return np.polyfit(n, x, 1)


@settings(deadline=None)
@given(vectors)
def test_detrend_removes_line_and_is_idempotent(x):
    out = dsp.detrend_linear(x)
    scale = max(1.0, np.abs(x).max())
    slope, intercept = _fit(out)
    assert abs(slope) <= 1e-9 * scale and abs(intercept) <= 1e-9 * scale * len(x)
    assert abs(out.mean()) <= 1e-9 * scale
    np.testing.assert_allclose(dsp.detrend_linear(out), out, atol=1e-9 * scale)


def test_filters_on_constant():
    c = np.full(31, 2.5)
    np.testing.assert_allclose(dsp.filter_trace(c, dsp.FilterSpec("lowpass", 7)), 2.5)
    np.testing.assert_allclose(dsp.filter_trace(c, dsp.FilterSpec("highpass", 7)), 0, atol=1e-12)


def test_moving_average_edges_shrink_symmetrically():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    out = dsp.moving_average(x, 5)
    np.testing.assert_allclose(out, [1.0, (1 + 2 + 4) / 3, 31 / 5, (4 + 8 + 16) / 3, 16.0])


def test_filter_spec_validation():
    with pytest.raises(ValueError):
        dsp.FilterSpec("lowpass", 4)
    with pytest.raises(ValueError):
        dsp.FilterSpec("bandpass", 3)
    with pytest.raises(WindowTooLarge):
        dsp.filter_trace(np.zeros(5), dsp.FilterSpec("lowpass", 7))


@settings(deadline=None)
@given(vectors, st.integers(0, 50))
def test_filter_pair_is_complementary_and_length_preserving(x, half):
    w = min(2 * half + 1, len(x) if len(x) % 2 else len(x) - 1)
    low = dsp.filter_trace(x, dsp.FilterSpec("lowpass", w))
    high = dsp.filter_trace(x, dsp.FilterSpec("highpass", w))
    assert low.shape == high.shape == x.shape
    np.testing.assert_allclose(low + high, x, atol=1e-9 * max(1.0, np.abs(x).max()))


def test_align_noop_and_empty(rng):
    ts = make_traceset(rng.normal(size=(4, 50)))
    out = dsp.align(ts, 0, 0)
    assert out.traces.tobytes() == ts.traces.tobytes()
    with pytest.raises(EmptySet):
        dsp.align(make_traceset(np.zeros((0, 5))), 0, 1)


def test_align_recovers_constructed_shift(rng):
    ref = rng.normal(size=128)
    rows = [ref, np.roll(ref, 3), np.roll(ref, 3), np.roll(ref, -2)]
    out = dsp.align(make_traceset(rows), 0, 5)
    assert json.loads(out.meta["align_lags"]) == [0, -3, -3, 2]
    for row in out.traces:
        np.testing.assert_array_equal(row, out.traces[0])
    again = dsp.align(out, 0, 5)
    assert json.loads(again.meta["align_lags"]) == [0, 0, 0, 0]


def test_average_basics():
    ts = make_traceset([[0, 2], [2, 0]])
    np.testing.assert_array_equal(dsp.average(ts, 2).traces, [[1, 1]])
    assert dsp.average(ts, 1) is ts
    with pytest.raises(GroupMismatch):
        dsp.average(make_traceset(np.zeros((3, 2))), 2)
    pts = np.zeros((2, 16), np.uint8)
    pts[1, 0] = 1
    with pytest.raises(MixedPlaintextGroup):
        dsp.average(make_traceset(np.zeros((2, 2)), pts), 2)


@settings(deadline=None, max_examples=50)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_average_is_linear(n, groups, s, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n * groups, s)).astype(np.float32).astype(np.float64)
    y = r.normal(size=(n * groups, s)).astype(np.float32).astype(np.float64)
    ax = dsp.average(make_traceset(x), n).traces.astype(np.float64)
    ay = dsp.average(make_traceset(y), n).traces.astype(np.float64)
    axy = dsp.average(make_traceset(x + y), n).traces.astype(np.float64)
    np.testing.assert_allclose(axy, ax + ay, atol=1e-5)


def _noisy_batch(rng, signal, sigma, t):
    return signal + rng.normal(0, sigma, (t, signal.size))


def test_snr_unit_signal_unit_noise(rng):
    signal = rng.normal(size=400)
    signal = (signal - signal.mean()) / signal.std()
    rep = dsp.estimate_snr(_noisy_batch(rng, signal, 1.0, 1000))
    assert abs(rep.snr_db) <= 0.5
    assert rep.snr_db == pytest.approx(10 * np.log10(rep.signal_power / rep.noise_power))


def test_snr_doubling_amplitude_adds_6db(rng):
    signal = np.sin(np.linspace(0, 20, 500))
    a = dsp.estimate_snr(_noisy_batch(rng, signal, 0.5, 1000)).snr_db
    b = dsp.estimate_snr(_noisy_batch(rng, 2 * signal, 0.5, 1000)).snr_db
    assert b - a == pytest.approx(6.02, abs=0.5)


def test_snr_zero_noise():
    with pytest.raises(ZeroNoise):
        dsp.estimate_snr(np.tile(np.arange(10.0), (5, 1)))


def test_snr_dc_invariance(rng):
    x = _noisy_batch(rng, np.sin(np.linspace(0, 9, 300)), 0.3, 50)
    assert dsp.estimate_snr(x + 7.5).snr_db == pytest.approx(dsp.estimate_snr(x).snr_db, abs=1e-9)


def test_snr_oracle_mode(rng):
    signal = np.cos(np.linspace(0, 30, 400))
    rep = dsp.estimate_snr(_noisy_batch(rng, signal, 0.5, 500), signature=signal)
    assert rep.noise_power == pytest.approx(0.25, rel=0.02)


def test_snr_rejects_mixed_plaintexts(rng):
    pts = np.zeros((4, 16), np.uint8)
    pts[2, 3] = 9
    with pytest.raises(MixedPlaintextGroup):
        dsp.estimate_snr(make_traceset(rng.normal(size=(4, 8)), pts))


@pytest.mark.parametrize("n", [2, 5, 10])
def test_averaging_gain(rng, n):
    signal = np.sin(np.linspace(0, 40, 400))
    raw = _noisy_batch(rng, signal, 1.0, 200 * n)
    base = dsp.estimate_snr(raw[:200]).snr_db
    avg = dsp.average(make_traceset(raw), n)
    assert dsp.estimate_snr(avg).snr_db - base == pytest.approx(10 * np.log10(n), abs=1.5)


def test_peak_counter():
    assert dsp.count_peaks([0, 1, 0, 2, 1, 3]) == 2
    assert dsp.count_peaks([1, 1, 1]) == 0
