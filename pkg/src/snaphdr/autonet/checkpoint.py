"""Versioned binary checkpoints of named float64 tensors.

Layout (all integers little-endian)::

    8 bytes   magic b"SNAPHDR\\x00"
    u32       format version (1)
    u32       config length, then that many bytes of UTF-8 JSON
    u32       tensor count
    per tensor:
      u16 name length, UTF-8 name
      u8  ndim, ndim x u32 shape
      prod(shape) x float64 little-endian, C order
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SNAPHDR\x00"
VERSION = 1


def dumps_checkpoint(params: dict, config: dict) -> bytes:
    out = [MAGIC, struct.pack("<I", VERSION)]
    blob = json.dumps(config, sort_keys=True).encode()
    out += [struct.pack("<I", len(blob)), blob, struct.pack("<I", len(params))]
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        key = name.encode()
        out += [struct.pack("<H", len(key)), key, struct.pack("<B", arr.ndim)]
        out += [struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    return b"".join(out)


def loads_checkpoint(data: bytes):
    """Return ``(params, config)``."""
    if data[:8] != MAGIC:
        raise ValueError("not a snaphdr checkpoint")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise ValueError("truncated checkpoint")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (clen,) = take("<I")
    config = json.loads(data[pos:pos + clen].decode())
    pos += clen
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = data[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(data):
            raise ValueError("truncated checkpoint")
        params[name] = np.frombuffer(data, dtype="<f8", count=nbytes // 8,
                                     offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
    return params, config


def save_checkpoint(path, params: dict, config: dict) -> None:
    with open(path, "wb") as f:
        f.write(dumps_checkpoint(params, config))


def load_checkpoint(path):
    with open(path, "rb") as f:
        return loads_checkpoint(f.read())
