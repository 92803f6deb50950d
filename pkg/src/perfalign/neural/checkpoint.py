"""Checkpoint file layout (all integers little-endian):

    magic      8 bytes  b"PFALCKPT"
    version    u16      1
    meta_len   u32      length of the UTF-8 JSON block that follows
    meta       JSON     {"config": ..., "state": {...}}
    n_blobs    u32
    per blob:
        name_len u16, name (UTF-8)
        ndim     u8, dims u32 * ndim
        data     float32 * prod(dims), row-major

Optimizer moments are stored as blobs named ``opt.m.<param>`` and
``opt.v.<param>``.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import ValidationError

MAGIC = b"PFALCKPT"
VERSION = 1


def save_checkpoint(path, config: dict, arrays: dict, state: dict | None = None) -> None:
    meta = json.dumps({"config": config, "state": state or {}}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta, struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict, dict, dict]:
    """Returns (config dict, name -> float32 array, state dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack_from("<HI", data, 8)
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    off = 14
    meta = json.loads(data[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = {}
    for _ in range(n):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape).copy()
        off += 4 * count
    return meta["config"], arrays, meta.get("state", {})
