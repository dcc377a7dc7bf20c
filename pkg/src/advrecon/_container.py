"""Little-endian binary container for dense float64 matrices.

Layout::

    b"ADVRECON-MAT\\0"   13 bytes
    version             u8
    rows, cols          u64, u64
    kind tag            u8
    seed                i64
    payload             rows*cols float64, row-major
"""

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAT_MAGIC = b"ADVRECON-MAT\0"
MAT_VERSION = 1
_HEADER = struct.Struct("<BQQBq")

# kind tags; 0-2 mirror OperatorKind, 3 is a plain matrix (reconstructors, caches)
KIND_TAGS = {"gaussian": 0, "dct": 1, "modified": 2, "dense": 3}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}


def encode_matrix(array, kind="dense", seed=0):
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 2:
        raise ValueError("only 2-d arrays can be stored, got ndim=%d" % array.ndim)
    rows, cols = array.shape
    header = MAT_MAGIC + _HEADER.pack(MAT_VERSION, rows, cols, KIND_TAGS[kind], int(seed))
    return header + np.ascontiguousarray(array).astype("<f8").tobytes()


def decode_matrix(data):
    """Return ``(array, kind, seed)`` from bytes produced by :func:`encode_matrix`."""
    if data[: len(MAT_MAGIC)] != MAT_MAGIC:
        raise FormatError("bad magic: not an ADVRECON-MAT file")
    offset = len(MAT_MAGIC)
    if len(data) < offset + _HEADER.size:
        raise FormatError("truncated header")
    version, rows, cols, tag, seed = _HEADER.unpack_from(data, offset)
    if version != MAT_VERSION:
        raise FormatError("unsupported matrix container version %d" % version)
    if tag not in TAG_KINDS:
        raise FormatError("unknown kind tag %d" % tag)
    offset += _HEADER.size
    expected = rows * cols * 8
    payload = data[offset:]
    if len(payload) != expected:
        raise FormatError(
            "payload size mismatch: expected %d bytes, found %d" % (expected, len(payload))
        )
    array = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
    return array, TAG_KINDS[tag], seed


def write_matrix(path, array, kind="dense", seed=0):
    Path(path).write_bytes(encode_matrix(array, kind, seed))


def read_matrix(path):
    return decode_matrix(Path(path).read_bytes())
