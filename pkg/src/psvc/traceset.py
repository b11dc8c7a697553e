from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np


@dataclass
class TraceSet:
    """T traces of S samples each, with per-trace plaintext/ciphertext.

    Samples are held as float32 so that what is in memory is exactly what
    the container format stores.
    """

    traces: np.ndarray
    plaintexts: np.ndarray
    ciphertexts: np.ndarray
    key: Optional[bytes] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.traces = np.ascontiguousarray(self.traces, dtype=np.float32)
        self.plaintexts = np.ascontiguousarray(self.plaintexts, dtype=np.uint8)
        self.ciphertexts = np.ascontiguousarray(self.ciphertexts, dtype=np.uint8)
        if self.traces.ndim != 2:
            raise ValueError("traces must be a T x S matrix")
        t = self.traces.shape[0]
        for name in ("plaintexts", "ciphertexts"):
            arr = getattr(self, name)
            if arr.shape != (t, 16):
                raise ValueError(f"{name} must have shape ({t}, 16), got {arr.shape}")
        if self.key is not None:
            self.key = bytes(self.key)
            if len(self.key) != 16:
                raise ValueError("key must be 16 bytes")
        self.meta = dict(self.meta)
        for k, v in self.meta.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise TypeError("meta must map str to str")

    @property
    def trace_count(self) -> int:
        return self.traces.shape[0]

    @property
    def sample_count(self) -> int:
        return self.traces.shape[1]

    @property
    def key_known(self) -> bool:
        return self.key is not None

    def __len__(self):
        return self.trace_count

    def replace(self, **changes) -> "TraceSet":
        kw = dict(traces=self.traces, plaintexts=self.plaintexts,
                  ciphertexts=self.ciphertexts, key=self.key, meta=self.meta)
        kw.update(changes)
        return TraceSet(**kw)

    def subset(self, index) -> "TraceSet":
        return self.replace(traces=self.traces[index],
                            plaintexts=self.plaintexts[index],
                            ciphertexts=self.ciphertexts[index])

    def equals(self, other: "TraceSet") -> bool:
        """Field-for-field equality, samples compared bitwise."""
        return (
            self.traces.shape == other.traces.shape
            and self.traces.tobytes() == other.traces.tobytes()
            and np.array_equal(self.plaintexts, other.plaintexts)
            and np.array_equal(self.ciphertexts, other.ciphertexts)
            and self.key == other.key
            and self.meta == other.meta
        )
