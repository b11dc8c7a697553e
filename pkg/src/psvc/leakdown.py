"""Leakdown verdicts, full-key recovery and Monte-Carlo sweeps."""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .cpa import SBOX_HW, GuessSummary, SelectionModel, run_cpa
from .dsp import average, detrend_traces
from .errors import EmptySummary, OutOfOperatingRange
from .sim import ChannelConfig, LeakageConfig, measure_snr, random_key, simulate_traces
from .traceset import TraceSet

DEFAULT_LAMBDA = 0.095
SUCCESS = "Success"
FAILED = "Failed"
OPERATING_RANGE = (1.8, 5.5)

TRACE_COUNT = "TraceCount"
INPUT_VOLTAGE = "InputVoltage"


@dataclass
class LeakdownVerdict:
    d: np.ndarray
    best_guess: int
    best_distance: float
    lam: float
    verdict: str

    @property
    def success(self) -> bool:
        return self.verdict == SUCCESS


def leakdown_test(summary, lam: float = DEFAULT_LAMBDA, guesses: Optional[Sequence[int]] = None) -> LeakdownVerdict:
    """Distance of every guess's peak correlation from the mean over all
    guesses; the best guess is accepted when its distance exceeds ``lam``.

    ``summary`` is a GuessSummary or a plain array of peak correlations.
    ``guesses`` labels the entries when only a subset of key values is given.
    """
    r = np.asarray(summary.r if isinstance(summary, GuessSummary) else summary, dtype=np.float64)
    if r.size == 0:
        raise EmptySummary("leakdown needs at least one guess")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    labels = np.arange(r.size) if guesses is None else np.asarray(guesses)
    if labels.shape != r.shape:
        raise ValueError("guesses and correlations differ in length")
    # uniform r means no discrimination at all; keep d exactly zero
    d = np.zeros_like(r) if np.ptp(r) == 0 else r - math.fsum(r) / r.size
    i = int(np.argmax(d))
    best = float(d[i])
    return LeakdownVerdict(d, int(labels[i]), best, lam, SUCCESS if best > lam else FAILED)


@dataclass
class KeyRecovery:
    key_guess: bytes
    target_bytes: List[int]
    verdicts: List[LeakdownVerdict]
    summaries: List[GuessSummary]
    correct_count: Optional[int] = None

    @property
    def all_success(self) -> bool:
        return all(v.success for v in self.verdicts)


def recover_key(traces: TraceSet, kind: str = SBOX_HW, lam: float = DEFAULT_LAMBDA,
                target_bytes: Sequence[int] = range(16)) -> KeyRecovery:
    """Attack each target byte independently and run the leakdown test.

    Bytes that are not attacked are reported as 0 in ``key_guess``.
    """
    target_bytes = list(target_bytes)
    summaries = [run_cpa(traces, SelectionModel(kind, b))[1] for b in target_bytes]
    verdicts = [leakdown_test(s, lam) for s in summaries]
    guess = bytearray(16)
    for b, v in zip(target_bytes, verdicts):
        guess[b] = v.best_guess
    correct = None
    if traces.key_known:
        correct = sum(guess[b] == traces.key[b] for b in target_bytes)
    return KeyRecovery(bytes(guess), target_bytes, verdicts, summaries, correct)


def condition(ts: TraceSet, repeat: int) -> TraceSet:
    """Standard conditioning before CPA: detrend, then Avg(repeat)."""
    return average(detrend_traces(ts), repeat)


@dataclass
class SweepPoint:
    x_value: float
    success_rate: float
    full_key_rate: float
    mean_best_distance: float
    snr_db: float


CSV_COLUMNS = ("x_value", "success_rate", "full_key_rate", "mean_best_distance", "snr_db")


@dataclass
class ExperimentReport:
    sweep_variable: str
    points: List[SweepPoint]
    repetitions: int
    seed: int
    config: dict = field(default_factory=dict)
    rep_seeds: List[int] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in self.points:
            w.writerow([repr(float(getattr(p, c))) for c in CSV_COLUMNS])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {
            "sweep_variable": self.sweep_variable,
            "repetitions": self.repetitions,
            "seed": self.seed,
            "rep_seeds": self.rep_seeds,
            "config": self.config,
            "points": [asdict(p) for p in self.points],
        }

    def manifest_json(self) -> str:
        return json.dumps(self.manifest(), indent=2, sort_keys=True)


def rep_seed(seed: int, rep: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(rep,))
    return int(ss.generate_state(1, np.uint64)[0])


def _one_run(args):
    cfg, ch, count, repeat, kind, lam = args
    key = random_key(cfg.rng_seed)
    ts = simulate_traces(key, count, cfg, ch, repeat=repeat)
    rec = recover_key(condition(ts, repeat), kind, lam)
    return rec.correct_count, float(np.mean([v.best_distance for v in rec.verdicts]))


def _run_point(cfg, ch, count, repeat, seeds, kind, lam, pool):
    jobs = [(replace(cfg, rng_seed=s), ch, count, repeat, kind, lam) for s in seeds]
    results = list(pool.map(_one_run, jobs)) if pool else [_one_run(j) for j in jobs]
    correct = np.array([c for c, _ in results])
    return (float(correct.sum() / (16 * len(seeds))), float(np.mean(correct == 16)),
            float(np.mean([d for _, d in results])))


def _sweep(variable, xs, make, cfg, ch, reps, repeat, kind, lam, workers, extra):
    if reps < 1:
        raise ValueError("repetitions must be >= 1")
    if not len(xs):
        raise ValueError("sweep needs at least one point")
    if list(xs) != sorted(xs):
        raise ValueError("sweep points must be ascending")
    seeds = [rep_seed(cfg.rng_seed, r) for r in range(reps)]
    pool = ProcessPoolExecutor(workers) if workers and workers > 1 else None
    points = []
    try:
        for x in xs:
            pcfg, count = make(x)
            rate, full, dist = _run_point(pcfg, ch, count, repeat, seeds, kind, lam, pool)
            snr = measure_snr(random_key(pcfg.rng_seed), pcfg, ch).snr_db
            points.append(SweepPoint(float(x), rate, full, dist, snr))
    finally:
        if pool:
            pool.shutdown()
    config = {"leakage": cfg.to_dict(), "channel": ch.to_dict(), "repeat": repeat,
              "model": kind, "lambda": lam, "points": [float(x) for x in xs]}
    config.update(extra)
    return ExperimentReport(variable, points, reps, cfg.rng_seed, config, seeds)


def sweep_trace_count(cfg: LeakageConfig, ch: ChannelConfig, counts: Sequence[int], reps: int,
                      lam: float = DEFAULT_LAMBDA, repeat: int = 10, kind: str = SBOX_HW,
                      workers: int = 1) -> ExperimentReport:
    """Success rate against number of captured traces.

    Every point reuses the same per-repetition seeds, so a smaller capture is
    a prefix of a larger one.
    """
    for c in counts:
        if c < 2 * repeat or c % repeat:
            raise ValueError(f"trace count {c} must be a multiple of repeat={repeat} giving >= 2 averaged traces")
    return _sweep(TRACE_COUNT, list(counts), lambda c: (cfg, int(c)), cfg, ch, reps, repeat,
                  kind, lam, workers, {})


def sweep_voltage(cfg: LeakageConfig, ch: ChannelConfig, voltages: Sequence[float], trace_count: int,
                  reps: int, lam: float = DEFAULT_LAMBDA, repeat: int = 10, kind: str = SBOX_HW,
                  operating_range=OPERATING_RANGE, workers: int = 1) -> ExperimentReport:
    """Success rate and SNR against supply voltage, noise held fixed."""
    lo, hi = operating_range
    for v in voltages:
        if not lo <= v <= hi:
            raise OutOfOperatingRange(f"{v} V outside the operating range {lo}-{hi} V")
    if trace_count < 2 * repeat or trace_count % repeat:
        raise ValueError(f"trace count {trace_count} must be a multiple of repeat={repeat}")
    return _sweep(INPUT_VOLTAGE, list(voltages), lambda v: (replace(cfg, supply_voltage=float(v)), trace_count),
                  cfg, ch, reps, repeat, kind, lam, workers,
                  {"trace_count": trace_count, "operating_range": list(operating_range)})
