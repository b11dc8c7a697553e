"""Self-describing binary container for TraceSets (``.psvc`` files).

Layout, all integers little-endian::

    magic        4s   b"PSVC"
    version      u16  1
    flags        u16  bit 0: key present
    trace_count  u32
    sample_count u32
    sample_fmt   u8   0 = binary32
    reserved     7x
    key          16s  only when flags bit 0 is set
    meta_len     u32
    meta         meta_len bytes of UTF-8 JSON (string -> string)
    records      trace_count x (plaintext 16s, ciphertext 16s, sample_count x f32)
"""

import json
import os
import struct

import numpy as np

from .errors import (BadMagic, LengthMismatch, TruncatedFile,
                     UnsupportedSampleFormat, UnsupportedVersion)
from .traceset import TraceSet

MAGIC = b"PSVC"
VERSION = 1
FLAG_KEY = 0x0001
FMT_F32 = 0

_HEAD = struct.Struct("<4sHHIIB7x")
_U32 = struct.Struct("<I")


def _meta_bytes(meta):
    return json.dumps(meta, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode(ts: TraceSet) -> bytes:
    flags = FLAG_KEY if ts.key_known else 0
    parts = [_HEAD.pack(MAGIC, VERSION, flags, ts.trace_count, ts.sample_count, FMT_F32)]
    if ts.key_known:
        parts.append(ts.key)
    meta = _meta_bytes(ts.meta)
    parts += [_U32.pack(len(meta)), meta]
    rec = np.empty((ts.trace_count, 32 + 4 * ts.sample_count), dtype=np.uint8)
    rec[:, :16] = ts.plaintexts
    rec[:, 16:32] = ts.ciphertexts
    rec[:, 32:] = ts.traces.astype("<f4").view(np.uint8).reshape(ts.trace_count, 4 * ts.sample_count)
    parts.append(rec.tobytes())
    return b"".join(parts)


def write_traceset(ts: TraceSet, path) -> None:
    data = encode(ts)
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise OSError(e.errno, f"cannot write trace file {os.fspath(path)!r}: {e.strerror}") from e


def read_traceset(path) -> TraceSet:
    try:
        with open(path, "rb") as f:
            size = os.fstat(f.fileno()).st_size
            return _decode(f, size, os.fspath(path))
    except OSError as e:
        raise OSError(e.errno, f"cannot read trace file {os.fspath(path)!r}: {e.strerror}") from e


def decode(data: bytes) -> TraceSet:
    import io
    return _decode(io.BytesIO(data), len(data), "<bytes>")


def _read(f, n, name, what):
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"{name}: file ends inside the {what}")
    return buf


def _decode(f, size, name):
    magic, version, flags, t, s, fmt = _HEAD.unpack(_read(f, _HEAD.size, name, "header"))
    if magic != MAGIC:
        raise BadMagic(f"{name}: not a trace container (magic {magic!r}, expected {MAGIC!r})")
    if version != VERSION:
        raise UnsupportedVersion(f"{name}: container version {version} (supported: {VERSION})")
    if fmt != FMT_F32:
        raise UnsupportedSampleFormat(f"{name}: unknown sample format {fmt}")
    key = _read(f, 16, name, "key") if flags & FLAG_KEY else None
    (meta_len,) = _U32.unpack(_read(f, 4, name, "metadata length"))
    header = _HEAD.size + (16 if key else 0) + 4 + meta_len
    if header > size:
        raise TruncatedFile(f"{name}: metadata of {meta_len} bytes runs past the end of the file")
    meta = json.loads(_read(f, meta_len, name, "metadata").decode("utf-8"))

    record = 32 + 4 * s
    body = size - header
    expected = t * record
    # checked against the real file size before anything is allocated
    if body != expected:
        if body < expected and body % record:
            raise TruncatedFile(
                f"{name}: file ends mid-trace ({body} record bytes, record size {record})")
        raise LengthMismatch(
            f"{name}: header declares {t} traces of {s} samples ({expected} bytes) "
            f"but the file holds {body} record bytes")
    raw = np.frombuffer(_read(f, expected, name, "records"), dtype=np.uint8).reshape(t, record)
    traces = raw[:, 32:].copy().view("<f4").astype(np.float32).reshape(t, s)
    return TraceSet(traces, raw[:, :16].copy(), raw[:, 16:32].copy(), key=key, meta=meta)
