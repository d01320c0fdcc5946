"""Snapshot files and CSV time series.

A snapshot is a text header terminated by a blank line, followed by the five
components as little-endian float64, row-major, concatenated::

    QFLOW1
    dim 2
    N 256
    h 0.0078125
    t 0.25
    components 5
    layout row-major
    endianness little

"""
from __future__ import annotations

import csv
from dataclasses import dataclass
import io as _io
from pathlib import Path

import numpy as np

MAGIC = "QFLOW1"
SERIES_COLUMNS = ("t", "energy", "r_star", "qnorm_origin_sq", "planarity_residual", "max_abs_q")


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class SnapshotHeader:
    dim: int
    N: int
    h: float
    t: float
    components: int = 5
    layout: str = "row-major"
    endianness: str = "little"

    def encode(self) -> bytes:
        lines = [
            MAGIC,
            f"dim {self.dim}",
            f"N {self.N}",
            f"h {self.h!r}",
            f"t {self.t!r}",
            f"components {self.components}",
            f"layout {self.layout}",
            f"endianness {self.endianness}",
            "",
            "",
        ]
        return "\n".join(lines).encode("ascii")

    @property
    def payload_count(self) -> int:
        return self.components * self.N**self.dim


def write_snapshot(path, data: np.ndarray, t: float, h: float | None = None) -> Path:
    data = np.asarray(data, dtype=float)
    dim = data.ndim - 1
    N = data.shape[1]
    if data.shape[1:] != (N,) * dim:
        raise FormatError(f"snapshot data must be (components, N, ...), got {data.shape}")
    hdr = SnapshotHeader(dim, N, float(h if h is not None else 2.0 / N), float(t), data.shape[0])
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".part")
    with open(tmp, "wb") as fh:
        fh.write(hdr.encode())
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes(order="C"))
    tmp.replace(path)
    return path


def write_field(path, fs) -> Path:
    return write_snapshot(path, fs.data, fs.t, fs.geometry.h)


def _parse_header(blob: bytes) -> tuple[SnapshotHeader, int]:
    end = blob.find(b"\n\n")
    if end < 0:
        raise FormatError("snapshot header is not terminated")
    lines = blob[:end].decode("ascii").split("\n")
    if lines[0] != MAGIC:
        raise FormatError(f"bad magic {lines[0]!r}")
    kv = {}
    for ln in lines[1:]:
        k, _, v = ln.partition(" ")
        kv[k] = v
    try:
        hdr = SnapshotHeader(
            int(kv["dim"]), int(kv["N"]), float(kv["h"]), float(kv["t"]),
            int(kv["components"]), kv["layout"], kv["endianness"],
        )
    except (KeyError, ValueError) as err:
        raise FormatError(f"malformed snapshot header: {err}") from None
    if hdr.layout != "row-major" or hdr.endianness != "little":
        raise FormatError(f"unsupported layout {hdr.layout}/{hdr.endianness}")
    return hdr, end + 2


def read_snapshot(path) -> tuple[SnapshotHeader, np.ndarray]:
    blob = Path(path).read_bytes()
    hdr, off = _parse_header(blob)
    payload = blob[off:]
    if len(payload) != 8 * hdr.payload_count:
        raise FormatError(f"payload has {len(payload)} bytes, expected {8 * hdr.payload_count}")
    data = np.frombuffer(payload, dtype="<f8").reshape((hdr.components,) + (hdr.N,) * hdr.dim)
    return hdr, data.astype(float)


# ----------------------------------------------------------------------------
# CSV


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_series(path, rows, columns=SERIES_COLUMNS) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])
    return path


def series_text(rows, columns=SERIES_COLUMNS) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf)
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])
    return buf.getvalue()


def read_series(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in r.items()} for r in rows]
