"""File formats for curves and raw trajectory tensors.

CSV files carry a header row and floats printed as their shortest
round-tripping decimal, so re-reading recovers the exact binary value and
equal data produces byte-identical files. The raw dump is a small
little-endian container: magic "SGDF", a format version, the (M, T, d)
shape, the time grid, then the state tensor in C order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .analysis import BoundReport
from .dynamics import TrajectoryEnsemble

MAGIC = b"SGDF"
BINARY_VERSION = 1


def format_float(x) -> str:
    """Shortest decimal string that parses back to exactly the same float."""
    return repr(float(x))


def _write_table(path, header, columns) -> None:
    columns = [np.asarray(c, dtype=float) for c in columns]
    sizes = {c.size for c in columns}
    if len(sizes) != 1:
        raise ValueError("all columns must have equal length")
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_curve_csv(path, times, values, stderrs) -> None:
    """One statistic over time: columns t, value, stderr."""
    _write_table(path, ("t", "value", "stderr"), (times, values, stderrs))


def write_report_csv(path, report: BoundReport) -> None:
    """Bound comparison: columns t, empirical, stderr, bound."""
    _write_table(path, ("t", "empirical", "stderr", "bound"),
                 (report.times, report.empirical, report.stderr, report.bound))


def read_csv_columns(path) -> dict:
    """Read a header-plus-floats CSV back into named float arrays."""
    text = Path(path).read_text(encoding="ascii")
    lines = [ln for ln in text.split("\n") if ln]
    if not lines:
        raise ValueError("empty csv")
    names = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    for r in rows:
        if len(r) != len(names):
            raise ValueError("ragged csv row")
    cols = {}
    for j, name in enumerate(names):
        cols[name] = np.array([float(r[j]) for r in rows])
    return cols


def write_ensemble_binary(path, ensemble: TrajectoryEnsemble) -> None:
    """Raw tensor dump of the saved states with their time grid."""
    M, T, d = ensemble.states.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", BINARY_VERSION))
        f.write(struct.pack("<III", M, T, d))
        f.write(np.ascontiguousarray(ensemble.times, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ensemble.states, dtype="<f8").tobytes())


def read_ensemble_binary(path):
    """Load (times, states) from a raw dump, checking magic and version."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError("not an ensemble dump: bad magic")
    version, = struct.unpack_from("<I", raw, 4)
    if version != BINARY_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    M, T, d = struct.unpack_from("<III", raw, 8)
    offset = 20
    expected = M * T * d
    if len(raw) < offset + 8 * (T + expected):
        raise ValueError("truncated dump")
    times = np.frombuffer(raw, dtype="<f8", count=T, offset=offset).astype(float)
    offset += 8 * T
    states = np.frombuffer(raw, dtype="<f8", count=expected, offset=offset)
    return times, states.reshape(M, T, d).astype(float)
