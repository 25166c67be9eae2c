"""Artifact writing: atomic CSV tables and binary field snapshots.

Every artifact starts with a provenance line carrying the hash of the
configuration that produced it. Files are written to a temporary name in
the target directory and renamed into place, so an interrupted run never
leaves a partial file under the final name.
"""
import csv
import hashlib
import io
import json
import os
import struct
import tempfile

import numpy as np

HEADER_PREFIX = "# config_hash="
SNAPSHOT_MAGIC = b"TPDLSNAP"
SNAPSHOT_VERSION = 1


def config_hash(config):
    """Short stable hash of a flat mapping (keys sorted, values as strings)."""
    payload = json.dumps({str(k): str(v) for k, v in dict(config).items()}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode())


def format_value(v):
    # repr round-trips floats exactly, which keeps reruns bit-identical
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(columns, rows, chash):
    buf = io.StringIO()
    buf.write(f"{HEADER_PREFIX}{chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(c, "") for c in columns]
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, chash):
    atomic_write_text(path, csv_text(columns, rows, chash))


def read_csv(path):
    """Returns ``(config_hash, list of dict rows)``."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(HEADER_PREFIX):
            raise ValueError(f"{path}: missing provenance header")
        rows = list(csv.DictReader(fh))
    return first[len(HEADER_PREFIX):].strip(), rows


# binary snapshots: magic, version, M, L, time, dtype code, name, hash, then raw data
_DTYPES = {1: np.complex64, 2: np.complex128}
_HEAD = struct.Struct("<8sIIdd I 32s 16s")


def write_snapshot(path, state, chash=""):
    """Store the eight half-spectrum components of a FieldState."""
    data = np.ascontiguousarray(state.stacked())
    code = {np.dtype(v): k for k, v in _DTYPES.items()}.get(data.dtype)
    if code is None:
        raise ValueError(f"unsupported snapshot dtype {data.dtype}")
    head = _HEAD.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, state.grid.M, state.grid.L,
                      float(state.time), code, b"n_plus,u_plus,n_minus,u_minus",
                      chash.encode()[:16])
    atomic_write_bytes(path, head + data.tobytes())


def read_snapshot(path):
    """Returns ``(FieldState, config_hash)``."""
    from .fields import FieldState, Grid
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, M, L, t, code, _name, chash = _HEAD.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC or version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: not a snapshot file")
    grid = Grid(L, M)
    arr = np.frombuffer(raw, dtype=_DTYPES[code], offset=_HEAD.size)
    arr = arr.reshape((8,) + grid.spectral_shape).copy()
    return FieldState.from_stacked(arr, grid, t), chash.rstrip(b"\0").decode()
