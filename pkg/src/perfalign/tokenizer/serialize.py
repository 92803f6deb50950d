"""File forms of TriStep sequences.

Binary layout (all little-endian)::

    magic    4 bytes  b"TRIS"
    version  uint16   1
    n_fields uint16   number of ids per step (18)
    n_steps  uint32
    ids      uint16 * n_fields * n_steps, step-major, field order of ``FIELDS``

The JSON form lists the steps row by row like the printed token figure:
``{"format": "tristeps", "version": 1, "rows": {"global": [...], "perf": [...],
"score": [...], "align": [...]}}``. Each row entry is a dict from field name
to its decoded value; silenced fields are omitted.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ParseError
from .vocab import CHANNELS, FIELD_INDEX, FIELDS, MICRO, MICRO_ZERO, N_FIELDS, OPS, TIME_SIGNATURES, TriStep, silent_ids

MAGIC = b"TRIS"
VERSION = 1


def steps_to_array(steps) -> np.ndarray:
    return np.array([s.ids for s in steps], dtype=np.int64).reshape(len(steps), N_FIELDS)


def array_to_steps(arr) -> list[TriStep]:
    return [TriStep(tuple(int(x) for x in row)) for row in np.asarray(arr)]


def to_bytes(steps) -> bytes:
    arr = steps_to_array(steps).astype("<u2")
    return MAGIC + struct.pack("<HHI", VERSION, N_FIELDS, len(steps)) + arr.tobytes()


def from_bytes(data: bytes) -> list[TriStep]:
    if data[:4] != MAGIC:
        raise ParseError("not a TriStep binary file")
    if len(data) < 12:
        raise ParseError("truncated TriStep header")
    version, n_fields, n_steps = struct.unpack("<HHI", data[4:12])
    if version != VERSION or n_fields != N_FIELDS:
        raise ParseError(f"unsupported TriStep layout (version {version}, {n_fields} fields)")
    body = data[12:]
    if len(body) != 2 * n_fields * n_steps:
        raise ParseError("TriStep body length does not match header")
    arr = np.frombuffer(body, dtype="<u2").reshape(n_steps, n_fields)
    return array_to_steps(arr)


def _value_of(name: str, fid: int):
    short = name.split(".", 1)[1]
    if name == "global.marker":
        return {1: "BOS", 2: "EOS"}[fid]
    if name == "score.timesig":
        num, den = TIME_SIGNATURES[fid]
        return f"{num}/{den}"
    if name == "align.op":
        return OPS[fid]
    if short == "pitch":
        return fid + 21
    if short == "vel":
        return fid + 1
    return fid


def _id_of(name: str, value) -> int:
    short = name.split(".", 1)[1]
    if name == "global.marker":
        return {"BOS": 1, "EOS": 2}[value]
    if name == "score.timesig":
        num, den = (int(x) for x in value.split("/"))
        return TIME_SIGNATURES.index((num, den))
    if name == "align.op":
        return OPS.index(value)
    if short == "pitch":
        return int(value) - 21
    if short == "vel":
        return int(value) - 1
    if FIELDS[FIELD_INDEX[name]].kind == MICRO:
        return int(value) + MICRO_ZERO
    return int(value)


def to_json(steps) -> dict:
    rows = {c: [] for c in ("global",) + CHANNELS}
    for s in steps:
        for c in rows:
            entry = {}
            for f in FIELDS:
                if f.channel != c:
                    continue
                fid = s[f.name]
                if f.kind == MICRO:
                    if fid != MICRO_ZERO:
                        entry[f.short] = fid - MICRO_ZERO
                elif fid != f.silence_id:
                    entry[f.short] = _value_of(f.name, fid)
            rows[c].append(entry)
    return {"format": "tristeps", "version": VERSION, "rows": rows}


def from_json(doc) -> list[TriStep]:
    if isinstance(doc, str):
        doc = json.loads(doc)
    if doc.get("format") != "tristeps":
        raise ParseError("not a TriStep JSON document")
    rows = doc["rows"]
    n = len(rows["global"])
    steps = []
    for i in range(n):
        ids = silent_ids()
        for c, row in rows.items():
            for short, value in row[i].items():
                name = f"{c}.{short}"
                if name not in FIELD_INDEX:
                    raise ParseError(f"unknown field {name}")
                ids[FIELD_INDEX[name]] = _id_of(name, value)
        steps.append(TriStep(tuple(ids)))
    return steps
