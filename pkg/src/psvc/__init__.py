"""Supply-voltage-coupling side-channel lab: victim simulator, trace
conditioning, CPA and leakdown testing for AES-128."""

from .aes import encrypt_block, expand_key, hamming_distance, hamming_weight, sbox
from .cpa import SelectionModel, pearson, run_cpa, run_cpa_all_bytes, select_value
from .dsp import FilterSpec, align, average, detrend_linear, estimate_snr, filter_trace
from .leakdown import leakdown_test, recover_key, sweep_trace_count, sweep_voltage
from .sim import ChannelConfig, LeakageConfig, apply_channel, render_power_signature, simulate_traces
from .traceio import read_traceset, write_traceset
from .traceset import TraceSet

__version__ = "0.1.0"
