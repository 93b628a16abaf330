"""Raw binary arrays with a JSON manifest sidecar.

Array file layout (little endian)::

    b"BIFI1"            magic
    uint32              ndim
    uint64 * ndim       shape
    b"<f8\\0"            dtype tag
    float64 * prod(shape)
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BIFI1"
DTYPE_TAG = b"<f8\x00"


class FormatError(ValueError):
    pass


def write_array(path, array) -> str:
    """Write ``array`` as float64; returns the sha256 of the file contents."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(array, dtype="<f8")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape) + DTYPE_TAG
    payload = header + arr.tobytes(order="C")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)
    return hashlib.sha256(payload).hexdigest()


def read_array(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:5]!r}")
    (ndim,) = struct.unpack_from("<I", data, 5)
    off = 9
    shape = struct.unpack_from(f"<{ndim}Q", data, off)
    off += 8 * ndim
    if data[off : off + 4] != DTYPE_TAG:
        raise FormatError(f"{path}: unsupported dtype tag {data[off:off + 4]!r}")
    off += 4
    count = int(np.prod(shape)) if ndim else 1
    if len(data) - off != 8 * count:
        raise FormatError(f"{path}: truncated payload")
    return np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True))
    os.replace(tmp, path)


def read_json(path):
    return json.loads(Path(path).read_text())
