"""Performance note ingestion: Standard MIDI Files and JSON-lines note lists.

JSON-lines schema, one object per line::

    {"onset_s": 0.0, "dur_s": 0.5, "pitch": 60, "velocity": 64}
"""
from __future__ import annotations

import json
import logging
import math
import struct
from collections import defaultdict, deque
from dataclasses import dataclass

from .errors import NoteRecordError, SMFParseError

log = logging.getLogger(__name__)

DEFAULT_TEMPO = 500_000  # microseconds per quarter (120 bpm)
PITCH_MIN, PITCH_MAX = 21, 108


@dataclass(frozen=True)
class PerfNote:
    onset_s: float
    dur_s: float
    pitch: int
    velocity: int

    @property
    def offset_s(self) -> float:
        return self.onset_s + self.dur_s

    def to_dict(self):
        return {"onset_s": self.onset_s, "dur_s": self.dur_s, "pitch": self.pitch, "velocity": self.velocity}


def perf_sort_key(n: PerfNote):
    return (n.onset_s, n.pitch, n.dur_s, n.velocity)


def sort_notes(notes) -> list[PerfNote]:
    return sorted(notes, key=perf_sort_key)


class TempoMap:
    """Piecewise-constant tempo; converts absolute ticks to seconds."""

    def __init__(self, ticks_per_quarter: int, changes=()):
        self.tpq = ticks_per_quarter
        entries: dict[int, int] = {0: DEFAULT_TEMPO}
        for tick, uspq in sorted(changes, key=lambda c: c[0]):
            entries[tick] = uspq
        self.entries = sorted(entries.items())
        # seconds at each change point
        self._seconds = [0.0]
        for (t0, u0), (t1, _) in zip(self.entries, self.entries[1:]):
            self._seconds.append(self._seconds[-1] + (t1 - t0) * u0 / 1e6 / self.tpq)

    def seconds(self, tick: int) -> float:
        lo, hi = 0, len(self.entries) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.entries[mid][0] <= tick:
                lo = mid
            else:
                hi = mid - 1
        t0, uspq = self.entries[lo]
        return self._seconds[lo] + (tick - t0) * uspq / 1e6 / self.tpq


class _Reader:
    def __init__(self, data: bytes, base: int = 0):
        self.data = data
        self.pos = 0
        self.base = base

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise SMFParseError(f"truncated {what}", offset=self.base + self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def byte(self, what: str) -> int:
        return self.take(1, what)[0]

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.byte("variable-length quantity")
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise SMFParseError("variable-length quantity longer than 4 bytes", offset=self.base + self.pos)


def _read_track(data: bytes, base: int):
    """Yield (abs_tick, kind, payload) for one MTrk body starting at file offset ``base``."""
    r = _Reader(data, base)
    tick = 0
    running = None
    events = []
    while r.pos < len(data):
        tick += r.varlen()
        status = r.byte("event status")
        if status == 0xFF:
            mtype = r.byte("meta type")
            length = r.varlen()
            body = r.take(length, "meta event")
            if mtype == 0x51 and length == 3:
                events.append((tick, "tempo", int.from_bytes(body, "big")))
            elif mtype == 0x2F:
                events.append((tick, "end", None))
                break
            continue
        if status in (0xF0, 0xF7):
            r.take(r.varlen(), "sysex event")
            continue
        if status < 0x80:
            if running is None:
                raise SMFParseError("data byte without running status", offset=base + r.pos - 1)
            r.pos -= 1
            status = running
        else:
            running = status
        kind = status & 0xF0
        channel = status & 0x0F
        nbytes = 1 if kind in (0xC0, 0xD0) else 2
        body = r.take(nbytes, "channel event")
        if kind == 0x90 and body[1] > 0:
            events.append((tick, "on", (channel, body[0], body[1])))
        elif kind == 0x80 or (kind == 0x90 and body[1] == 0):
            events.append((tick, "off", (channel, body[0])))
    return events, tick


def parse_smf(data: bytes, warnings: list | None = None) -> list[PerfNote]:
    """Decode note events of an SMF (format 0 or 1) into seconds-domain notes.

    Overlapping notes of the same (channel, pitch) are closed first-in
    first-out. Sustain pedal is ignored.
    """
    warnings = warnings if warnings is not None else []
    r = _Reader(data)
    if r.take(4, "header chunk id") != b"MThd":
        raise SMFParseError("missing MThd header", offset=0)
    hlen = struct.unpack(">I", r.take(4, "header length"))[0]
    header = r.take(hlen, "header chunk")
    if hlen < 6:
        raise SMFParseError("header chunk too short", offset=8)
    fmt, ntracks, division = struct.unpack(">HHH", header[:6])
    if fmt not in (0, 1):
        raise SMFParseError(f"unsupported SMF format {fmt}", offset=8)
    if division & 0x8000:
        raise SMFParseError("SMPTE time division unsupported", offset=12)

    tracks = []
    while len(tracks) < ntracks:
        chunk_start = r.pos
        cid = r.take(4, "chunk id")
        clen = struct.unpack(">I", r.take(4, "chunk length"))[0]
        if r.pos + clen > len(data):
            raise SMFParseError("truncated track chunk", offset=chunk_start)
        body = r.take(clen, "track chunk")
        if cid != b"MTrk":
            continue
        tracks.append(_read_track(body, chunk_start + 8))

    tempo_changes = [(t, v) for events, _ in tracks for t, k, v in events if k == "tempo"]
    tmap = TempoMap(division, tempo_changes)
    last_tick = max((end for _, end in tracks), default=0)

    notes = []
    for events, _ in tracks:
        pending: dict[tuple[int, int], deque] = defaultdict(deque)
        for tick, kind, payload in events:
            if kind == "on":
                ch, pitch, vel = payload
                pending[(ch, pitch)].append((tick, vel))
            elif kind == "off":
                ch, pitch = payload
                if pending[(ch, pitch)]:
                    on_tick, vel = pending[(ch, pitch)].popleft()
                    notes.append((on_tick, tick, pitch, vel))
        for (ch, pitch), queue in pending.items():
            for on_tick, vel in queue:
                warnings.append(f"unmatched note-on pitch {pitch} channel {ch} at tick {on_tick}; closed at {last_tick}")
                notes.append((on_tick, max(last_tick, on_tick), pitch, vel))

    out = []
    for on_tick, off_tick, pitch, vel in notes:
        if not PITCH_MIN <= pitch <= PITCH_MAX:
            warnings.append(f"pitch {pitch} at tick {on_tick} outside piano range, dropped")
            continue
        onset = tmap.seconds(on_tick)
        dur = tmap.seconds(off_tick) - onset
        if dur <= 0:
            warnings.append(f"zero-length note pitch {pitch} at tick {on_tick}, dropped")
            continue
        out.append(PerfNote(onset_s=onset, dur_s=dur, pitch=pitch, velocity=vel))
    for w in warnings:
        log.warning(w)
    return sort_notes(out)


def _varlen_bytes(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def write_smf(notes, ticks_per_quarter: int = 480, tempo: int = DEFAULT_TEMPO) -> bytes:
    """Format-0 SMF at constant tempo; onsets rounded to the tick grid."""
    sec_per_tick = tempo / 1e6 / ticks_per_quarter
    events = []
    for n in notes:
        on = round(n.onset_s / sec_per_tick)
        off = max(on + 1, round(n.offset_s / sec_per_tick))
        events.append((off, 0, bytes([0x80, n.pitch, 0])))
        events.append((on, 1, bytes([0x90, n.pitch, n.velocity])))
    events.sort(key=lambda e: (e[0], e[1]))
    body = bytearray(_varlen_bytes(0) + b"\xff\x51\x03" + tempo.to_bytes(3, "big"))
    last = 0
    for tick, _, msg in events:
        body += _varlen_bytes(tick - last) + msg
        last = tick
    body += _varlen_bytes(0) + b"\xff\x2f\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def load_notes_json(text: str) -> list[PerfNote]:
    notes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            onset, dur = float(rec["onset_s"]), float(rec["dur_s"])
            pitch, vel = rec["pitch"], rec["velocity"]
        except (ValueError, KeyError, TypeError) as exc:
            raise NoteRecordError(f"unreadable record ({exc})", lineno) from None
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (pitch, vel)):
            raise NoteRecordError("pitch and velocity must be integers", lineno)
        if not (math.isfinite(onset) and onset >= 0):
            raise NoteRecordError(f"onset {onset} must be finite and >= 0", lineno)
        if not (math.isfinite(dur) and dur > 0):
            raise NoteRecordError(f"duration {dur} must be positive", lineno)
        if not 1 <= vel <= 127:
            raise NoteRecordError(f"velocity {vel} outside [1, 127]", lineno)
        if not PITCH_MIN <= pitch <= PITCH_MAX:
            raise NoteRecordError(f"pitch {pitch} outside [{PITCH_MIN}, {PITCH_MAX}]", lineno)
        notes.append(PerfNote(onset_s=onset, dur_s=dur, pitch=pitch, velocity=vel))
    return sort_notes(notes)


def dump_notes_json(notes) -> str:
    return "".join(json.dumps(n.to_dict()) + "\n" for n in notes)
