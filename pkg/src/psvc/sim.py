"""Victim model: renders AES executions as supply-rail voltage signatures
and passes them through a coupling channel with supply noise."""

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Optional

import numpy as np

from . import aes
from .dsp import moving_average
from .traceset import TraceSet

DIRECT = "direct"
VRM = "vrm"
RF = "rf"
CHANNELS = (DIRECT, VRM, RF)

N_STATES = 40

# Streams derived from the run seed; each trace gets its own so that any
# trace can be regenerated (or generated in parallel) from (seed, index).
_PLAINTEXT_STREAM = 0
_TRACE_STREAM = 1
_KEY_STREAM = 2
_CALIBRATION_STREAM = 3


def _default_baselines():
    # strictly decreasing through a round so each round shows one peak
    return {"SubBytes": 1.0, "ShiftRows": 0.8, "MixColumns": 0.6, "AddRoundKey": 0.4}


@dataclass(frozen=True)
class LeakageConfig:
    samples_per_op: int = 96
    leak_gain: float = 0.02
    op_baseline: Dict[str, float] = field(default_factory=_default_baselines)
    supply_voltage: float = 5.0
    reference_voltage: float = 5.0
    # calibrated so a single raw Direct trace has ~5 dB SNR at 5 V
    noise_sigma: float = 0.117
    drift_slope_sigma: float = 1e-5
    dc_shift_sigma: float = 0.05
    jitter_max: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.samples_per_op < 16:
            raise ValueError("samples_per_op must be >= 16 (one slot per state byte)")
        if self.supply_voltage <= 0 or self.reference_voltage <= 0:
            raise ValueError("voltages must be positive")
        for name in ("noise_sigma", "drift_slope_sigma", "dc_shift_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.jitter_max < 0:
            raise ValueError("jitter_max must be >= 0")
        missing = set(aes.OPS) - set(self.op_baseline)
        if missing:
            raise ValueError(f"op_baseline lacks {sorted(missing)}")

    @property
    def sample_count(self) -> int:
        return self.samples_per_op * N_STATES

    @property
    def scale(self) -> float:
        return self.supply_voltage / self.reference_voltage

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ChannelConfig:
    kind: str = DIRECT
    vrm_attenuation: float = 0.5
    vrm_noise_sigma: float = 0.02
    carrier_freq_fraction: float = 0.2
    modulation_depth: float = 0.5
    receiver_noise_sigma: float = 0.02

    def __post_init__(self):
        if self.kind not in CHANNELS:
            raise ValueError(f"unknown channel {self.kind!r}; expected one of {CHANNELS}")
        if self.kind == VRM:
            if not 0 < self.vrm_attenuation <= 1:
                raise ValueError("vrm_attenuation must lie in (0, 1]")
            if self.vrm_noise_sigma < 0:
                raise ValueError("vrm_noise_sigma must be >= 0")
        if self.kind == RF:
            if not 0 < self.carrier_freq_fraction < 0.5:
                raise ValueError(
                    f"carrier frequency {self.carrier_freq_fraction} cycles/sample "
                    "must lie in (0, 0.5) to stay below Nyquist")
            if not 0 < self.modulation_depth <= 1:
                raise ValueError("modulation_depth must lie in (0, 1]")
            if self.receiver_noise_sigma < 0:
                raise ValueError("receiver_noise_sigma must be >= 0")

    def to_dict(self):
        return asdict(self)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _slot_index(samples_per_op):
    # state byte k owns samples [k*spo//16, (k+1)*spo//16) of its segment
    return (np.arange(samples_per_op) * 16) // samples_per_op


def _state_matrix(key, pt):
    _, rounds = aes.encrypt_block(key, pt)
    ops = [r.op for r in rounds]
    states = np.frombuffer(b"".join(r.state for r in rounds), dtype=np.uint8).reshape(N_STATES, 16)
    return ops, states


def render_power_signature(key, pt, cfg: LeakageConfig) -> np.ndarray:
    """Noise-free rail voltage for one encryption.

    Each of the 40 intermediate states owns ``samples_per_op`` samples at
    the baseline of its operation; within the segment the state bytes are
    processed one after another, each adding ``leak_gain * HW(byte)``.
    Everything scales with supply/reference voltage.
    """
    ops, states = _state_matrix(key, pt)
    hw = np.frombuffer(aes.HW, dtype=np.uint8)[states].astype(np.float64)
    base = np.array([cfg.op_baseline[op] for op in ops])
    per_slot = base[:, None] + cfg.leak_gain * hw[:, _slot_index(cfg.samples_per_op)]
    return cfg.scale * per_slot.reshape(-1)


def _am_window(carrier):
    w = int(round(1.0 / carrier))
    return w if w % 2 else w + 1


def apply_channel(signature, ch: ChannelConfig, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Transform the victim's rail signature into what the adversary sees."""
    s = np.asarray(signature, dtype=np.float64)
    if s.size == 0:
        raise ValueError("signature is empty")
    if rng is None:
        rng = np.random.default_rng(0)
    if ch.kind == DIRECT:
        return s.copy()
    if ch.kind == VRM:
        out = ch.vrm_attenuation * s
        if ch.vrm_noise_sigma:
            out = out + rng.normal(0.0, ch.vrm_noise_sigma, s.shape)
        return out
    # RF: amplitude-modulate a carrier, then envelope-detect at the receiver
    centre = s.mean()
    peak = np.abs(s - centre).max()
    u = (s - centre) / peak if peak > 0 else np.zeros_like(s)
    n = np.arange(s.size)
    carrier = np.cos(2 * np.pi * ch.carrier_freq_fraction * n)
    w = min(_am_window(ch.carrier_freq_fraction), s.size if s.size % 2 else s.size - 1)
    rectified = np.abs((1.0 + ch.modulation_depth * u) * carrier)
    # normalising by the smoothed |carrier| removes the rectifier ripple
    env = moving_average(rectified, w) / moving_average(np.abs(carrier), w)
    out = centre + (env - 1.0) / ch.modulation_depth * peak
    if ch.receiver_noise_sigma:
        out = out + rng.normal(0.0, ch.receiver_noise_sigma, s.shape)
    return out


def _supply_noise(cfg, rng, size):
    noise = rng.normal(0.0, cfg.noise_sigma, size) if cfg.noise_sigma else np.zeros(size)
    slope = rng.normal(0.0, cfg.drift_slope_sigma) if cfg.drift_slope_sigma else 0.0
    dc = rng.normal(0.0, cfg.dc_shift_sigma) if cfg.dc_shift_sigma else 0.0
    jitter = int(rng.integers(-cfg.jitter_max, cfg.jitter_max + 1)) if cfg.jitter_max else 0
    return noise + slope * np.arange(size) + dc, jitter


def random_plaintexts(seed, groups):
    return np.stack([stream(seed, _PLAINTEXT_STREAM, g).integers(0, 256, 16, dtype=np.uint8)
                     for g in range(groups)]) if groups else np.zeros((0, 16), np.uint8)


def random_key(seed) -> bytes:
    return stream(seed, _KEY_STREAM).integers(0, 256, 16, dtype=np.uint8).tobytes()


def simulate_traces(key, n: int, cfg: LeakageConfig, ch: ChannelConfig = ChannelConfig(),
                    repeat: int = 1, plaintext: Optional[bytes] = None) -> TraceSet:
    """Capture ``n`` traces of the victim encrypting under ``key``.

    Plaintexts are uniformly random, each used for ``repeat`` consecutive
    traces (so ``average(ts, repeat)`` is valid). Passing ``plaintext``
    fixes it for every trace instead.
    """
    key = bytes(key)
    if n < 1:
        raise ValueError("trace count must be >= 1")
    if repeat < 1 or n % repeat:
        raise ValueError(f"trace count {n} must be a positive multiple of repeat={repeat}")
    seed = cfg.rng_seed
    groups = n // repeat
    if plaintext is not None:
        pts = np.tile(np.frombuffer(bytes(plaintext), dtype=np.uint8), (groups, 1))
    else:
        pts = random_plaintexts(seed, groups)

    s = cfg.sample_count
    traces = np.empty((n, s), dtype=np.float64)
    cts = np.empty((n, 16), dtype=np.uint8)
    pt_rows = np.repeat(pts, repeat, axis=0)
    cache = {}
    for i in range(n):
        pt = pt_rows[i].tobytes()
        if pt not in cache:
            cache[pt] = (render_power_signature(key, pt, cfg), aes.encrypt(key, pt))
        sig, ct = cache[pt]
        rng = stream(seed, _TRACE_STREAM, i)
        observed = apply_channel(sig, ch, rng)
        noise, jitter = _supply_noise(cfg, rng, s)
        traces[i] = np.roll(observed + noise, jitter)
        cts[i] = np.frombuffer(ct, dtype=np.uint8)

    meta = {
        "tool": "psvc.simulate",
        "channel": ch.kind,
        "vin": repr(cfg.supply_voltage),
        "seed": str(seed),
        "repeat": str(repeat),
        "samples_per_op": str(cfg.samples_per_op),
    }
    return TraceSet(traces, pt_rows, cts, key=key, meta=meta)


def signature_power(cfg: LeakageConfig, samples: int = 32) -> float:
    """Average over random encryptions of the time-variance of the
    noise-free signature (i.e. the SNR numerator)."""
    rng = stream(0, _CALIBRATION_STREAM)
    total = 0.0
    for _ in range(samples):
        k = rng.integers(0, 256, 16, dtype=np.uint8).tobytes()
        p = rng.integers(0, 256, 16, dtype=np.uint8).tobytes()
        total += float(np.var(render_power_signature(k, p, cfg)))
    return total / samples


def calibrate_noise(cfg: LeakageConfig, snr_db: float, voltage: Optional[float] = None) -> LeakageConfig:
    """Return ``cfg`` with ``noise_sigma`` chosen so a single raw Direct
    trace has ``snr_db`` at ``voltage`` (the reference voltage by default).

    DC shift and drift count toward the noise budget; jitter does not.
    """
    v = cfg.reference_voltage if voltage is None else voltage
    signal = signature_power(replace(cfg, supply_voltage=v))
    s = cfg.sample_count
    drift = cfg.drift_slope_sigma ** 2 * float(np.mean(np.arange(s, dtype=np.float64) ** 2))
    white = signal / 10 ** (snr_db / 10) - cfg.dc_shift_sigma ** 2 - drift
    if white <= 0:
        raise ValueError(f"target SNR {snr_db} dB is unreachable: drift and DC shift alone exceed the noise budget")
    return replace(cfg, noise_sigma=float(np.sqrt(white)))


def measure_snr(key, cfg: LeakageConfig, ch: ChannelConfig = ChannelConfig(), n: int = 64):
    """Empirical single-trace SNR from a fixed-plaintext capture."""
    from .dsp import estimate_snr

    pt = stream(cfg.rng_seed, _CALIBRATION_STREAM, 1).integers(0, 256, 16, dtype=np.uint8).tobytes()
    ts = simulate_traces(key, n, cfg, ch, plaintext=pt)
    return estimate_snr(ts)
