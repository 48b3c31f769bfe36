"""Seismogram files.

CSV: one file per trace, header ``t,value``, values written with 17
significant digits so a round trip is exact.

Binary (``.wls``), little-endian::

    bytes 0-3    magic b"WLS1"
    float64      dt
    uint32       nt
    uint32       receiver count R
    int32[R]     receiver indices (1-based)
    float64[R*nt] samples, receiver-major
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .types import Seismogram, SeismogramSet

MAGIC = b"WLS1"
_HEADER = struct.Struct("<4sdII")


def write_csv(trace: Seismogram, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(trace.times, trace.samples):
            w.writerow([f"{t:.17g}", f"{v:.17g}"])
    return path


def read_csv(path, receiver_index: int = 0) -> Seismogram:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, v = data[:, 0], data[:, 1]
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    return Seismogram(dt, v, receiver_index)


def write_binary(traces: SeismogramSet, path) -> Path:
    path = Path(path)
    idx = np.asarray(traces.indices, dtype="<i4")
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, traces.dt, traces.nt, idx.size))
        fh.write(idx.tobytes())
        fh.write(np.ascontiguousarray(traces.matrix(), dtype="<f8").tobytes())
    return path


def read_binary(path) -> SeismogramSet:
    raw = Path(path).read_bytes()
    magic, dt, nt, nrec = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a seismogram file (bad magic {magic!r})")
    off = _HEADER.size
    idx = np.frombuffer(raw, dtype="<i4", count=nrec, offset=off)
    off += 4 * nrec
    expected = off + 8 * nrec * nt
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", count=nrec * nt, offset=off).reshape(nrec, nt)
    return SeismogramSet.from_matrix(dt, data.copy(), idx.tolist())
