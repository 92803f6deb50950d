"""Tri-stream compound vocabulary.

A step is a fixed-width vector of field ids. Fields are grouped into three
channels (performance, score, alignment) plus a global BOS/EOS field.

Ranges are half-open; every multi-class field owns one silence id placed
after its value ids. Binary flags and exclusive fields use 0 for the
inactive state. Micro-timing fields have no silence id: they are ignored
whenever their channel is not carrying a note.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

PERF, SCORE, ALIGN, GLOBAL = "perf", "score", "align", "global"
CHANNELS = (PERF, SCORE, ALIGN)

# field kinds
VALUE, MICRO, FLAG, EXCLUSIVE = "value", "micro", "flag", "exclusive"

TIME_SIGNATURES = ((1, 4), (2, 4), (3, 4), (4, 4), (5, 4), (6, 4), (2, 2), (3, 2),
                   (3, 8), (6, 8), (9, 8), (12, 8))

OPS = ("match", "insert", "delete")
GLOBAL_NONE, GLOBAL_BOS, GLOBAL_EOS = 0, 1, 2


@dataclass(frozen=True)
class FieldVocab:
    name: str  # "<channel>.<field>"
    channel: str
    size: int
    kind: str
    silence_id: Optional[int]

    @property
    def exclusive(self) -> bool:
        return self.kind == EXCLUSIVE

    @property
    def short(self) -> str:
        return self.name.split(".", 1)[1]


def _value(channel, name, n_values):
    return FieldVocab(f"{channel}.{name}", channel, n_values + 1, VALUE, n_values)


def _binary(channel, name, kind):
    return FieldVocab(f"{channel}.{name}", channel, 2, kind, 0)


def _micro(channel, name):
    return FieldVocab(f"{channel}.{name}", channel, 11, MICRO, None)


FIELDS: tuple[FieldVocab, ...] = (
    FieldVocab("global.marker", GLOBAL, 3, VALUE, GLOBAL_NONE),
    _value(PERF, "t", 33),           # 0..31 from the quantizer, 32 for the band just below a reset
    _micro(PERF, "t_micro"),
    _binary(PERF, "reset", EXCLUSIVE),
    _value(PERF, "vel", 32),         # bins 1..32
    _value(PERF, "dur", 48),
    _value(PERF, "pitch", 88),       # MIDI 21..108
    _binary(PERF, "skip", EXCLUSIVE),
    FieldVocab("score.timesig", SCORE, len(TIME_SIGNATURES) + 1, EXCLUSIVE, len(TIME_SIGNATURES)),
    _value(SCORE, "bar", 50),
    _value(SCORE, "pos", 32),
    _micro(SCORE, "pos_micro"),
    _value(SCORE, "dur", 48),
    _value(SCORE, "pitch", 88),
    _binary(SCORE, "skip", EXCLUSIVE),
    _value(ALIGN, "op", 3),
    _binary(ALIGN, "repeat", FLAG),
    _binary(ALIGN, "skip", EXCLUSIVE),
)

EXPECTED_SIZES = {
    "global.marker": 3,
    "perf.t": 34, "perf.t_micro": 11, "perf.reset": 2, "perf.vel": 33, "perf.dur": 49,
    "perf.pitch": 89, "perf.skip": 2,
    "score.timesig": 13, "score.bar": 51, "score.pos": 33, "score.pos_micro": 11, "score.dur": 49,
    "score.pitch": 89, "score.skip": 2,
    "align.op": 4, "align.repeat": 2, "align.skip": 2,
}

FIELD_INDEX = {f.name: i for i, f in enumerate(FIELDS)}
N_FIELDS = len(FIELDS)
VOCAB_SIZES = tuple(f.size for f in FIELDS)
MICRO_ZERO = 5  # id of micro value 0

# fields that must be all-silent or all-active for a channel carrying a note
NOTE_FIELDS = {
    PERF: ("perf.t", "perf.vel", "perf.dur", "perf.pitch"),
    SCORE: ("score.bar", "score.pos", "score.dur", "score.pitch"),
    ALIGN: ("align.op",),
}
EXCLUSIVE_FIELDS = {c: tuple(f.name for f in FIELDS if f.channel == c and f.exclusive) for c in CHANNELS}
MICRO_FOR = {PERF: "perf.t_micro", SCORE: "score.pos_micro"}


def _check_sizes():
    got = {f.name: f.size for f in FIELDS}
    if got != EXPECTED_SIZES:
        raise AssertionError(f"vocabulary sizes drifted: {got}")


_check_sizes()


def silent_ids() -> list[int]:
    """Field ids of an all-silent step (micro fields at their zero value)."""
    return [MICRO_ZERO if f.kind == MICRO else f.silence_id for f in FIELDS]


@dataclass(frozen=True)
class TriStep:
    ids: tuple

    def __post_init__(self):
        if len(self.ids) != N_FIELDS:
            raise ValueError(f"expected {N_FIELDS} field ids, got {len(self.ids)}")

    def __getitem__(self, name: str) -> int:
        return self.ids[FIELD_INDEX[name]]

    @classmethod
    def build(cls, **fields) -> "TriStep":
        """Silent step with the given fields set; keys use ``__`` for the dot."""
        ids = silent_ids()
        for key, value in fields.items():
            ids[FIELD_INDEX[key.replace("__", ".")]] = int(value)
        return cls(tuple(ids))

    def replace(self, **fields) -> "TriStep":
        ids = list(self.ids)
        for key, value in fields.items():
            ids[FIELD_INDEX[key.replace("__", ".")]] = int(value)
        return TriStep(tuple(ids))


BOS = TriStep.build(global__marker=GLOBAL_BOS)
EOS = TriStep.build(global__marker=GLOBAL_EOS)


def timesig_id(num: int, den: int) -> int:
    return TIME_SIGNATURES.index((num, den))
