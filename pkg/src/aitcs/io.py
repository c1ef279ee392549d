"""Matrix/vector files and trace CSVs.

Two matrix formats, picked by file extension:

* ``.csv``: a header row ``m,n`` followed by m rows of n values.
* ``.bin``: two little-endian int64 dims ``(m, n)`` followed by ``m*n``
  little-endian float64 values in column-major order.

Vectors are stored as n x 1 matrices. Floats are written with ``repr`` (shortest
round-trip form), so a CSV round trip is exact.
"""
import csv
import struct
from pathlib import Path

import numpy as np

__all__ = ["read_matrix", "write_matrix", "read_vector", "write_vector", "write_trace_csv",
           "TRACE_COLUMNS", "fmt"]

TRACE_COLUMNS = ("t", "tau", "step", "residual_l2", "err_l1", "err_l2", "err_linf")


def fmt(v):
    if v is None:
        return ""
    return repr(float(v))


def _kind(path):
    suffix = Path(path).suffix.lower()
    if suffix not in (".csv", ".bin"):
        raise ValueError(f"unsupported matrix file extension {suffix!r} (use .csv or .bin)")
    return suffix[1:]


def write_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    m, n = M.shape
    if _kind(path) == "bin":
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qq", m, n))
            fh.write(np.asfortranarray(M).astype("<f8").tobytes(order="F"))
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([m, n])
        for row in M:
            w.writerow([fmt(v) for v in row])


def read_matrix(path):
    if _kind(path) == "bin":
        raw = Path(path).read_bytes()
        if len(raw) < 16:
            raise ValueError(f"{path}: truncated header")
        m, n = struct.unpack("<qq", raw[:16])
        body = raw[16:]
        if m < 0 or n < 0 or len(body) != 8 * m * n:
            raise ValueError(f"{path}: expected {m}x{n} float64 payload, got {len(body)} bytes")
        return np.frombuffer(body, dtype="<f8").reshape((m, n), order="F").astype(float)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    try:
        m, n = (int(v) for v in rows[0])
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed matrix file ({exc})") from None
    if data.size == 0 and m * n == 0:
        return np.zeros((m, n))
    if data.shape != (m, n):
        raise ValueError(f"{path}: header says {m}x{n} but found {data.shape}")
    return data


def write_vector(path, v):
    write_matrix(path, np.asarray(v, dtype=float).reshape(-1, 1))


def read_vector(path):
    M = read_matrix(path)
    if 1 not in M.shape:
        raise ValueError(f"{path}: expected a vector, got a {M.shape[0]}x{M.shape[1]} matrix")
    return M.ravel()


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in trace:
            w.writerow([r.t, fmt(r.tau), fmt(r.step), fmt(r.residual_l2),
                        fmt(r.err_l1), fmt(r.err_l2), fmt(r.err_linf)])
