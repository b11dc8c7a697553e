import csv
import hashlib
import json

import numpy as np
import pytest

from psvc import traceio
from psvc.cli import main

FAST = ["--samples-per-op", "16"]
QUIET = ["--noise-sigma", "0", "--drift", "0", "--dc-shift", "0"]


def sha(p):
    return hashlib.sha256(p.read_bytes()).hexdigest()


def run(*argv, env=None):
    return main([str(a) for a in argv], environ=env or {})


def test_simulate_deterministic(tmp_path, capsys):
    a = tmp_path / "t.psvc"
    hashes = []
    for _ in range(2):
        assert run("simulate", "--key", "random", "--traces", 1000, "--channel", "direct",
                   "--seed", 7, "--out", a, *FAST) == 0
        hashes.append(sha(a))
    assert hashes[0] == hashes[1]
    ts = traceio.read_traceset(a)
    assert ts.trace_count == 1000 and ts.key_known
    line = capsys.readouterr().out.splitlines()[0]
    assert "T=1000" in line and "channel=direct" in line and "seed=7" in line
    rc = json.loads(ts.meta["run_config"])
    assert rc["seed"] == 7 and rc["traces"] == 1000


def test_simulate_rejects_carrier_above_nyquist(tmp_path, capsys):
    assert run("simulate", "--channel", "rf", "--carrier", 0.6, "--out", tmp_path / "x.psvc") == 2
    assert "Nyquist" in capsys.readouterr().err
    assert run("simulate", "--traces", 10, "--repeat", 3, "--out", tmp_path / "x.psvc") == 2
    assert run("simulate", "--key", "abcd", "--out", tmp_path / "x.psvc") == 2


def test_simulate_voltage_lowers_snr(tmp_path):
    snr = {}
    for v in (3.0, 5.0):
        out = tmp_path / f"v{v}.psvc"
        assert run("simulate", "--traces", 10, "--vin", v, "--seed", 1, "--out", out, *FAST) == 0
        snr[v] = float(traceio.read_traceset(out).meta["snr_db"])
    assert snr[5.0] > snr[3.0]


def test_precedence_flag_config_env_default(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"traces": 20, "seed": 4}))
    out = tmp_path / "p.psvc"
    env = {"PSVC_SEED": "9", "PSVC_TRACES": "40", "PSVC_REPEAT": "2"}
    assert run("simulate", "--config", cfg, "--traces", 10, "--out", out, *FAST, env=env) == 0
    rc = json.loads(traceio.read_traceset(out).meta["run_config"])
    assert (rc["traces"], rc["seed"], rc["repeat"], rc["channel"]) == (10, 4, 2, "direct")


def test_unknown_config_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tracez": 20}))
    assert run("simulate", "--config", cfg, "--out", tmp_path / "x.psvc") == 2
    assert "tracez" in capsys.readouterr().err


def test_missing_required(capsys):
    assert run("simulate") == 2


def _ramp_file(tmp_path):
    out = tmp_path / "r.psvc"
    assert run("simulate", "--traces", 1000, "--repeat", 10, "--drift", 1e-3, "--seed", 3,
               "--out", out, *FAST) == 0
    return out


def test_filter_detrend_and_average(tmp_path):
    src = _ramp_file(tmp_path)
    out = tmp_path / "d.psvc"
    assert run("filter", "--in", src, "--out", out, "--detrend") == 0
    ts = traceio.read_traceset(out)
    n = np.arange(ts.sample_count)
    slopes = [np.polyfit(n, row.astype(np.float64), 1)[0] for row in ts.traces]
    assert max(abs(s) for s in slopes) < 1e-6
    out2 = tmp_path / "a.psvc"
    assert run("filter", "--in", src, "--out", out2, "--avg", 10) == 0
    assert traceio.read_traceset(out2).trace_count == 100


def test_filter_chain_order_is_fixed(tmp_path):
    src = _ramp_file(tmp_path)
    a, b = tmp_path / "a.psvc", tmp_path / "b.psvc"
    assert run("filter", "--in", src, "--out", a, "--avg", 10, "--lowpass", 5, "--detrend", "--align", 2) == 0
    assert run("filter", "--align", 2, "--detrend", "--lowpass", 5, "--in", src, "--out", b, "--avg", 10) == 0
    ta, tb = traceio.read_traceset(a), traceio.read_traceset(b)
    assert ta.traces.tobytes() == tb.traces.tobytes()
    assert ta.meta["filter_chain"] == "detrend,lowpass:5,align:2,avg:10"


def test_filter_bad_grouping(tmp_path, capsys):
    src = _ramp_file(tmp_path)
    assert run("filter", "--in", src, "--out", tmp_path / "x.psvc", "--avg", 3) == 1
    assert "multiple of 3" in capsys.readouterr().err
    assert run("filter", "--in", src, "--out", tmp_path / "x.psvc", "--lowpass", 4) == 2


def test_attack_noiseless(tmp_path, capsys):
    src = tmp_path / "n.psvc"
    assert run("simulate", "--traces", 300, "--seed", 5, "--out", src, *FAST, *QUIET) == 0
    report = tmp_path / "rep.json"
    assert run("attack", "--in", src, "--out", report) == 0
    out = capsys.readouterr().out
    assert "16/16 bytes correct" in out
    data = json.loads(report.read_text())
    assert data["correct_count"] == 16 and len(data["bytes"]) == 16
    assert data["run_config"]["lambda"] == pytest.approx(0.095)
    assert data["key_guess"] == traceio.read_traceset(src).key.hex()


def test_attack_single_byte_with_correlation_csv(tmp_path, capsys):
    src = tmp_path / "n.psvc"
    assert run("simulate", "--traces", 300, "--seed", 5, "--out", src, *FAST, *QUIET) == 0
    capsys.readouterr()
    corr = tmp_path / "corr"
    assert run("attack", "--in", src, "--byte", 0, "--corr-out", corr) == 0
    out = capsys.readouterr().out
    assert "1/1 bytes correct" in out and "byte  1" not in out
    assert sorted(p.name for p in corr.iterdir()) == ["byte_00.csv"]
    rows = list(csv.reader((corr / "byte_00.csv").open()))
    assert len(rows) == 256 and len(rows[0]) == 640


def test_attack_without_leak_exits_3(tmp_path, capsys):
    src = tmp_path / "z.psvc"
    assert run("simulate", "--traces", 200, "--leak-gain", 0, "--seed", 2, "--out", src, *FAST) == 0
    assert run("attack", "--in", src) == 3
    captured = capsys.readouterr()
    assert captured.out.count("Failed") > 8
    assert "leakdown failed" in captured.err or "no leak detected" in captured.err


def test_attack_insufficient_traces(tmp_path, capsys):
    src = tmp_path / "one.psvc"
    assert run("simulate", "--traces", 1, "--out", src, *FAST) == 0
    assert run("attack", "--in", src) == 1
    assert "at least 2 traces" in capsys.readouterr().err


def test_sweep_voltage_and_determinism(tmp_path):
    args = ["sweep", "--mode", "voltage", "--points", "3.0,4.0,5.0", "--reps", 2, "--trace-count", 200,
            "--seed", 3]
    assert run(*args, "--out-dir", tmp_path / "a") == 0
    assert run(*args, "--out-dir", tmp_path / "b") == 0
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    rows = list(csv.DictReader(a.decode().splitlines()))
    snr = [float(r["snr_db"]) for r in rows]
    assert snr == sorted(snr) and len(set(snr)) == 3
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["run_config"]["points"] == "3.0,4.0,5.0"
    assert manifest["sweep_variable"] == "InputVoltage"


def test_sweep_trace_mode(tmp_path):
    assert run("sweep", "--mode", "traces", "--points", "50,200,800", "--reps", 1,
               "--out-dir", tmp_path / "t") == 0
    rows = list(csv.DictReader((tmp_path / "t" / "sweep.csv").open()))
    rates = [float(r["success_rate"]) for r in rows]
    assert rates == sorted(rates)


def test_sweep_validation(tmp_path):
    assert run("sweep", "--mode", "voltage", "--points", "9.0", "--out-dir", tmp_path) == 1
    assert run("sweep", "--mode", "traces", "--points", "200,100", "--out-dir", tmp_path) == 2
