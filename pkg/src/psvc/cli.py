"""Command-line entry point: ``psvc simulate|filter|attack|sweep``.

Every parameter resolves as flag > ``--config`` JSON file > ``PSVC_<NAME>``
environment variable > built-in default, and the resolved values are
embedded in each artifact written.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import traceio
from .cpa import HD, SBOX_HW, XOR_HW, XOR_VALUE, SelectionModel, run_cpa
from .dsp import FilterSpec, align, average, detrend_traces, filter_traces
from .errors import PsvcError, ZeroNoise
from .leakdown import DEFAULT_LAMBDA, leakdown_test, sweep_trace_count, sweep_voltage
from .sim import (CHANNELS, ChannelConfig, LeakageConfig, calibrate_noise, measure_snr,
                  random_key, simulate_traces)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_LEAKDOWN = 0, 1, 2, 3
ENV_PREFIX = "PSVC_"

MODELS = {"xor": XOR_HW, "sbox": SBOX_HW, "hd": HD, "xorval": XOR_VALUE}


class UsageError(Exception):
    pass


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int_list(v):
    if isinstance(v, list):
        return [int(x) for x in v]
    return [int(x) for x in str(v).split(",") if x.strip()]


def _float_list(v):
    if isinstance(v, list):
        return [float(x) for x in v]
    return [float(x) for x in str(v).split(",") if x.strip()]


@dataclass
class Param:
    name: str
    type: Callable[[Any], Any] = str
    default: Any = None
    help: str = ""
    choices: Optional[tuple] = None
    flag: bool = False
    required: bool = False


COMMON = [Param("config", str, None, "JSON file of parameter defaults")]

SIMULATE = [
    Param("key", str, "random", 'hex key (32 digits) or "random" (derived from the seed)'),
    Param("traces", int, 1000, "number of traces"),
    Param("repeat", int, 1, "consecutive traces sharing each plaintext"),
    Param("channel", str, "direct", "coupling channel", CHANNELS),
    Param("vin", float, 5.0, "victim supply voltage (V)"),
    Param("vref", float, 5.0, "reference supply voltage (V)"),
    Param("snr_db", float, None, "calibrate white noise to this single-trace SNR at the reference voltage"),
    Param("noise_sigma", float, None, "white noise std-dev (V); overrides the default calibration"),
    Param("leak_gain", float, LeakageConfig.leak_gain, "volts per Hamming-weight unit"),
    Param("samples_per_op", int, LeakageConfig.samples_per_op, "samples per AES operation segment"),
    Param("drift", float, LeakageConfig.drift_slope_sigma, "std-dev of per-trace linear drift slope (V/sample)"),
    Param("dc_shift", float, LeakageConfig.dc_shift_sigma, "std-dev of per-trace DC offset (V)"),
    Param("jitter", int, LeakageConfig.jitter_max, "max circular misalignment (samples)"),
    Param("vrm_alpha", float, ChannelConfig.vrm_attenuation, "VRM attenuation"),
    Param("vrm_noise", float, ChannelConfig.vrm_noise_sigma, "VRM added noise (V)"),
    Param("carrier", float, ChannelConfig.carrier_freq_fraction, "RF carrier (cycles/sample)"),
    Param("mod_depth", float, ChannelConfig.modulation_depth, "AM modulation depth"),
    Param("rx_noise", float, ChannelConfig.receiver_noise_sigma, "receiver noise (V)"),
    Param("seed", int, 0, "RNG seed"),
    Param("out", str, None, "output trace file", required=True),
]

FILTER = [
    Param("in", str, None, "input trace file", required=True),
    Param("out", str, None, "output trace file", required=True),
    Param("detrend", _bool, False, "remove per-trace linear trend", flag=True),
    Param("lowpass", int, None, "moving-average low-pass window (odd)"),
    Param("highpass", int, None, "moving-average high-pass window (odd)"),
    Param("align", int, None, "align traces to the reference within this lag"),
    Param("align_ref", int, 0, "reference trace index for --align"),
    Param("avg", int, None, "average consecutive groups of N traces"),
]

ATTACK = [
    Param("in", str, None, "input trace file", required=True),
    Param("model", str, "sbox", "selection model", tuple(MODELS)),
    Param("lambda", float, DEFAULT_LAMBDA, "leakdown threshold"),
    Param("byte", int, None, "attack only this key byte"),
    Param("corr_out", str, None, "directory for per-byte 256 x S correlation CSVs"),
    Param("out", str, None, "JSON report path"),
]

SWEEP = [
    Param("mode", str, None, "sweep variable", ("traces", "voltage"), required=True),
    Param("points", str, None, "comma-separated trace counts or voltages", required=True),
    Param("reps", int, 20, "repetitions per point"),
    Param("trace_count", int, 2000, "traces per run in voltage mode"),
    Param("repeat", int, 10, "plaintext repeat / Avg(N) group size"),
    Param("channel", str, "direct", "coupling channel", CHANNELS),
    Param("vin", float, 5.0, "supply voltage in trace-count mode (V)"),
    Param("snr_db", float, None, "calibrate white noise to this SNR at the reference voltage"),
    Param("leak_gain", float, LeakageConfig.leak_gain, "volts per Hamming-weight unit"),
    Param("model", str, "sbox", "selection model", tuple(MODELS)),
    Param("lambda", float, DEFAULT_LAMBDA, "leakdown threshold"),
    Param("workers", int, 1, "worker processes"),
    Param("seed", int, 0, "RNG seed"),
    Param("out_dir", str, None, "directory for sweep.csv and manifest.json", required=True),
]

COMMANDS = {"simulate": SIMULATE, "filter": FILTER, "attack": ATTACK, "sweep": SWEEP}


def build_parser():
    parser = argparse.ArgumentParser(prog="psvc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, params in COMMANDS.items():
        p = sub.add_parser(cmd)
        for prm in COMMON + params:
            opt = "--" + prm.name.replace("_", "-")
            kw = dict(dest=prm.name, default=None, help=prm.help)
            if prm.flag:
                p.add_argument(opt, action="store_const", const=True, **kw)
            else:
                p.add_argument(opt, type=prm.type, choices=prm.choices, **kw)
    return parser


def resolve(cmd, args, environ=None):
    """Merge flags, config file, environment and defaults for ``cmd``."""
    environ = os.environ if environ is None else environ
    params = {p.name: p for p in COMMANDS[cmd]}
    file_cfg = {}
    if args.config:
        try:
            with open(args.config) as f:
                raw = json.load(f)
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot load config file {args.config}: {e}")
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in raw.items():
            name = k.replace("-", "_")
            if name not in params:
                raise UsageError(f"unknown key {k!r} in config file for {cmd}")
            file_cfg[name] = v
    out = {}
    for name, prm in params.items():
        value = getattr(args, name)
        if value is None and name in file_cfg:
            value = file_cfg[name]
        env = ENV_PREFIX + name.upper()
        if value is None and env in environ:
            value = environ[env]
        if value is None:
            value = prm.default
        if value is not None:
            try:
                value = prm.type(value)
            except (TypeError, ValueError) as e:
                raise UsageError(f"invalid value for --{name.replace('_', '-')}: {e}")
            if prm.choices and value not in prm.choices:
                raise UsageError(f"--{name.replace('_', '-')} must be one of {', '.join(prm.choices)}")
        elif prm.required:
            raise UsageError(f"--{name.replace('_', '-')} is required")
        out[name] = value
    return out


def _key(spec, seed):
    if spec == "random":
        return random_key(seed)
    try:
        key = bytes.fromhex(spec)
    except ValueError:
        key = b""
    if len(key) != 16:
        raise UsageError('--key must be 32 hex digits or "random"')
    return key


def _configs(rc):
    try:
        cfg = LeakageConfig(
            samples_per_op=rc.get("samples_per_op", LeakageConfig.samples_per_op),
            leak_gain=rc["leak_gain"],
            supply_voltage=rc["vin"],
            reference_voltage=rc.get("vref", 5.0),
            drift_slope_sigma=rc.get("drift", LeakageConfig.drift_slope_sigma),
            dc_shift_sigma=rc.get("dc_shift", LeakageConfig.dc_shift_sigma),
            jitter_max=rc.get("jitter", 0),
            rng_seed=rc["seed"],
        )
        if rc.get("noise_sigma") is not None and rc.get("snr_db") is not None:
            raise UsageError("give at most one of --noise-sigma and --snr-db")
        if rc.get("noise_sigma") is not None:
            cfg = replace(cfg, noise_sigma=rc["noise_sigma"])
        elif rc.get("snr_db") is not None:
            cfg = calibrate_noise(cfg, rc["snr_db"])
        ch = ChannelConfig(
            kind=rc["channel"],
            vrm_attenuation=rc.get("vrm_alpha", ChannelConfig.vrm_attenuation),
            vrm_noise_sigma=rc.get("vrm_noise", ChannelConfig.vrm_noise_sigma),
            carrier_freq_fraction=rc.get("carrier", ChannelConfig.carrier_freq_fraction),
            modulation_depth=rc.get("mod_depth", ChannelConfig.modulation_depth),
            receiver_noise_sigma=rc.get("rx_noise", ChannelConfig.receiver_noise_sigma),
        )
    except ValueError as e:
        raise UsageError(str(e))
    return cfg, ch


def _rc_json(rc):
    return json.dumps(rc, sort_keys=True, separators=(",", ":"))


def cmd_simulate(rc):
    cfg, ch = _configs(rc)
    key = _key(rc["key"], rc["seed"])
    if rc["traces"] < 1 or rc["repeat"] < 1 or rc["traces"] % rc["repeat"]:
        raise UsageError("--traces must be a positive multiple of --repeat")
    ts = simulate_traces(key, rc["traces"], cfg, ch, repeat=rc["repeat"])
    try:
        snr = measure_snr(key, cfg, ch).snr_db
    except ZeroNoise:
        snr = float("inf")
    meta = dict(ts.meta, run_config=_rc_json(rc), noise_sigma=repr(cfg.noise_sigma), snr_db=f"{snr:.4f}")
    traceio.write_traceset(ts.replace(meta=meta), rc["out"])
    print(f"{rc['out']}: T={ts.trace_count} S={ts.sample_count} channel={ch.kind} "
          f"Vin={cfg.supply_voltage:g} seed={cfg.rng_seed} snr={snr:.2f} dB")
    return EXIT_OK


def cmd_filter(rc):
    ts = traceio.read_traceset(rc["in"])
    if rc["detrend"]:
        ts = detrend_traces(ts)
    try:
        specs = [FilterSpec(kind, rc[kind]) for kind in ("lowpass", "highpass") if rc[kind] is not None]
    except ValueError as e:
        raise UsageError(str(e))
    for spec in specs:
        ts = filter_traces(ts, spec)
    if rc["align"] is not None:
        ts = align(ts, rc["align_ref"], rc["align"])
    if rc["avg"] is not None:
        ts = average(ts, rc["avg"])
    ts = ts.replace(meta=dict(ts.meta, filter_config=_rc_json(rc)))
    traceio.write_traceset(ts, rc["out"])
    print(f"{rc['out']}: T={ts.trace_count} S={ts.sample_count} chain={ts.meta.get('filter_chain', '')}")
    return EXIT_OK


def cmd_attack(rc):
    ts = traceio.read_traceset(rc["in"])
    kind = MODELS[rc["model"]]
    lam = rc["lambda"]
    if lam < 0:
        raise UsageError("--lambda must be >= 0")
    targets = list(range(16)) if rc["byte"] is None else [rc["byte"]]
    if any(not 0 <= b < 16 for b in targets):
        raise UsageError("--byte must be in 0..15")
    corr_dir = Path(rc["corr_out"]) if rc["corr_out"] else None
    if corr_dir:
        corr_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    guess = bytearray(16)
    for b in targets:
        cm, summary = run_cpa(ts, SelectionModel(kind, b))
        v = leakdown_test(summary, lam)
        guess[b] = v.best_guess
        rows.append((b, summary, v))
        if corr_dir:
            np.savetxt(corr_dir / f"byte_{b:02d}.csv", cm.values, fmt="%.6g", delimiter=",")

    print("key guess: " + "".join(f"{guess[b]:02x}" if b in targets else "--" for b in range(16)))
    for b, _, v in rows:
        print(f"byte {b:2d}: guess 0x{v.best_guess:02x}  d={v.best_distance:+.4f}  {v.verdict}")
    correct = None
    if ts.key_known:
        correct = sum(guess[b] == ts.key[b] for b in targets)
        print(f"{correct}/{len(targets)} bytes correct")
    failed = sum(not v.success for _, _, v in rows)

    if rc["out"]:
        report = {
            "run_config": rc,
            "input_meta": ts.meta,
            "trace_count": ts.trace_count,
            "key_guess": bytes(guess).hex(),
            "lambda": lam,
            "model": kind,
            "correct_count": correct,
            "bytes": [{
                "byte": b,
                "best_guess": v.best_guess,
                "best_distance": v.best_distance,
                "verdict": v.verdict,
                "argmax_time": int(s.argmax_time[v.best_guess]),
                "r": s.r.tolist(),
                "d": v.d.tolist(),
            } for b, s, v in rows],
        }
        Path(rc["out"]).write_text(json.dumps(report, indent=2, sort_keys=True))

    if failed == len(rows):
        print("no leak detected: leakdown failed on every byte", file=sys.stderr)
        return EXIT_LEAKDOWN
    if failed:
        print(f"leakdown failed on {failed}/{len(rows)} bytes", file=sys.stderr)
        return EXIT_LEAKDOWN
    return EXIT_OK


def cmd_sweep(rc):
    cfg, ch = _configs(rc)
    kind = MODELS[rc["model"]]
    try:
        if rc["mode"] == "traces":
            report = sweep_trace_count(cfg, ch, _int_list(rc["points"]), rc["reps"], rc["lambda"],
                                       repeat=rc["repeat"], kind=kind, workers=rc["workers"])
        else:
            report = sweep_voltage(cfg, ch, _float_list(rc["points"]), rc["trace_count"], rc["reps"],
                                   rc["lambda"], repeat=rc["repeat"], kind=kind, workers=rc["workers"])
    except PsvcError:
        raise
    except ValueError as e:
        raise UsageError(str(e))
    out = Path(rc["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(report.to_csv())
    manifest = report.manifest()
    manifest["run_config"] = rc
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    sys.stdout.write(report.to_csv())
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "filter": cmd_filter, "attack": cmd_attack, "sweep": cmd_sweep}


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = resolve(args.command, args, environ)
        return HANDLERS[args.command](rc)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"psvc {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PsvcError, OSError, ValueError) as e:
        print(f"psvc {args.command}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
