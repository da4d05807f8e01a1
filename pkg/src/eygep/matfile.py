"""Binary matrix files: b"GEPM", u64 rows, u64 cols, row-major f64, all little-endian."""
import struct

import numpy as np

from .errors import ShapeMismatch
from .linalg import as_matrix

MAGIC = b"GEPM"
_HEADER = struct.Struct("<4sQQ")


def write_matrix(path, m):
    m = np.ascontiguousarray(as_matrix(m, "matrix"), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))


def read_matrix(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ShapeMismatch(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ShapeMismatch(f"{path}: bad magic {magic!r}")
        payload = fh.read()
    if len(payload) != 8 * rows * cols:
        raise ShapeMismatch(f"{path}: payload has {len(payload)} bytes, expected {8 * rows * cols}")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
