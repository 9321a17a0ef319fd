"""Byte-stable CSV and binary PGM writers."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import ExportError

SIG_DIGITS = 9


def format_value(v) -> str:
    """Integers verbatim, floats to 9 significant digits, None as an empty field."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    f = float(v)
    if not math.isfinite(f):
        raise ExportError(f"refusing to export non-finite value {f}")
    if f == 0.0:
        return "0"  # also folds -0.0
    return f"{f:.{SIG_DIGITS}g}"


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ExportError(f"row {i} has {len(row)} fields, header has {width}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    text = csv_text(header, rows)
    path.write_bytes(text.encode("ascii"))
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ExportError(f"{path} has no header")
    return rows[0], rows[1:]


SENSITIVITY_HEADER = ("k", "mean", "std")


def sensitivity_rows(report) -> list[tuple]:
    """Rows (k, mean, std) of a sensitivity report; an empty report gives none."""
    if report is None:
        return []
    values = report.mean.values
    return [(k, values[k - 1], report.std[k - 1]) for k in report.mean.radii]


def export_csv(report, path) -> Path:
    return write_csv(path, SENSITIVITY_HEADER, sensitivity_rows(report))


def pgm_bytes(matrix) -> bytes:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ExportError(f"PGM needs a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ExportError("refusing to export non-finite values to PGM")
    # round half up on the non-negative range, independent of numpy's banker's rounding
    pix = np.floor(255.0 * np.clip(m, 0.0, 1.0) + 0.5).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def export_pgm(matrix, path) -> Path:
    path = Path(path)
    path.write_bytes(pgm_bytes(matrix))
    return path


def read_pgm(path) -> np.ndarray:
    """Parse a P5 file written by :func:`export_pgm` into uint8 rows."""
    blob = Path(path).read_bytes()
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise ExportError(f"{path} is not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    if int(parts[2]) != 255:
        raise ExportError("only maxval 255 is supported")
    data = np.frombuffer(parts[3], dtype=np.uint8)
    if data.size != w * h:
        raise ExportError(f"PGM payload has {data.size} bytes, expected {w * h}")
    return data.reshape(h, w)
