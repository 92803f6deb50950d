"""Score intermediate representation.

Times are integer ticks at 320 per quarter note, so a 32nd note is 40 ticks
and the finest position adjustment (4 ticks) is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

TICKS_PER_QUARTER = 320
PITCH_MIN, PITCH_MAX = 21, 108

REPEAT_KINDS = ("forward", "backward", "volta_start", "volta_end")


def bar_ticks(numerator: int, denominator: int) -> int:
    return numerator * TICKS_PER_QUARTER * 4 // denominator


@dataclass(frozen=True, order=True)
class ScoreNote:
    bar_index: int
    pos_ticks: int
    pitch: int
    dur_ticks: int
    voice: int = 1

    def to_dict(self):
        return {
            "bar": self.bar_index,
            "pos": self.pos_ticks,
            "dur": self.dur_ticks,
            "pitch": self.pitch,
            "voice": self.voice,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["bar"]), int(d["pos"]), int(d["pitch"]), int(d["dur"]), int(d.get("voice", 1)))


def note_sort_key(n: ScoreNote):
    # chords are always pitch-ascending
    return (n.bar_index, n.pos_ticks, n.pitch, n.voice, n.dur_ticks)


@dataclass(frozen=True)
class RepeatMark:
    kind: str
    bar_index: int
    number: int = 0  # volta number for volta_start / volta_end

    def to_dict(self):
        d = {"kind": self.kind, "bar": self.bar_index}
        if self.kind.startswith("volta"):
            d["number"] = self.number
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], int(d["bar"]), int(d.get("number", 0)))


@dataclass
class ScoreIR:
    time_sigs: list = field(default_factory=list)  # (bar_index, numerator, denominator)
    notes: list = field(default_factory=list)
    repeats: list = field(default_factory=list)
    bar_count: int = 0
    key_fifths: int = 0
    bar_text: dict = field(default_factory=dict)  # bar -> opaque directions text
    warnings: list = field(default_factory=list, compare=False)

    def time_sig_at(self, bar: int) -> tuple[int, int]:
        current = (4, 4)
        for b, num, den in self.time_sigs:
            if b <= bar:
                current = (num, den)
            else:
                break
        return current

    def bar_length(self, bar: int) -> int:
        return bar_ticks(*self.time_sig_at(bar))

    def bar_starts(self) -> list[int]:
        """Absolute tick at which each bar starts (folded, no repeats)."""
        starts, t = [], 0
        for b in range(self.bar_count):
            starts.append(t)
            t += self.bar_length(b)
        return starts

    def notes_in_bar(self, bar: int) -> list[ScoreNote]:
        return [n for n in self.notes if n.bar_index == bar]

    def validate(self):
        from ..errors import ValidationError

        bars_with_sig = [b for b, _, _ in self.time_sigs]
        if len(bars_with_sig) != len(set(bars_with_sig)):
            raise ValidationError("more than one time signature in a bar")
        if bars_with_sig != sorted(bars_with_sig):
            raise ValidationError("time signatures out of bar order")
        for n in self.notes:
            if not 0 <= n.bar_index < self.bar_count:
                raise ValidationError(f"note {n} refers to missing bar")
            if not 0 <= n.pos_ticks < self.bar_length(n.bar_index):
                raise ValidationError(f"note {n} starts outside its bar")
            if n.dur_ticks <= 0:
                raise ValidationError(f"note {n} has non-positive duration")
            if not PITCH_MIN <= n.pitch <= PITCH_MAX:
                raise ValidationError(f"note {n} outside piano range")
        for r in self.repeats:
            if r.kind not in REPEAT_KINDS:
                raise ValidationError(f"unknown repeat kind {r.kind!r}")
            if not 0 <= r.bar_index < max(self.bar_count, 1):
                raise ValidationError(f"repeat mark {r} refers to missing bar")
        return self

    def to_dict(self):
        return {
            "bar_count": self.bar_count,
            "key_fifths": self.key_fifths,
            "time_sigs": [list(t) for t in self.time_sigs],
            "repeats": [r.to_dict() for r in self.repeats],
            "bar_text": {str(k): v for k, v in sorted(self.bar_text.items())},
            "notes": [n.to_dict() for n in self.notes],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            time_sigs=[tuple(int(x) for x in t) for t in d.get("time_sigs", [])],
            notes=[ScoreNote.from_dict(n) for n in d.get("notes", [])],
            repeats=[RepeatMark.from_dict(r) for r in d.get("repeats", [])],
            bar_count=int(d.get("bar_count", 0)),
            key_fifths=int(d.get("key_fifths", 0)),
            bar_text={int(k): v for k, v in d.get("bar_text", {}).items()},
        )


@dataclass(frozen=True)
class BarRef:
    linear_index: int
    source_index: int
    pass_number: int


@dataclass
class UnfoldedScore:
    """Linear bar sequence as performed, with provenance.

    ``notes`` carry ``bar_index`` = linear bar; ``bars[k]`` maps linear bar k
    back to its source bar and pass number.
    """

    bars: list
    notes: list
    score: Optional[ScoreIR] = None

    def source_bar(self, linear: int) -> int:
        return self.bars[linear].source_index

    def pass_number(self, linear: int) -> int:
        return self.bars[linear].pass_number

    def linear_starts(self) -> list[int]:
        starts, t = [], 0
        for ref in self.bars:
            starts.append(t)
            t += self.score.bar_length(ref.source_index) if self.score else 1280
        return starts

    def note_ticks(self) -> list[int]:
        """Absolute linear tick of every note onset."""
        starts = self.linear_starts()
        return [starts[n.bar_index] + n.pos_ticks for n in self.notes]

    def source_notes(self) -> list[tuple[ScoreNote, int]]:
        """Each note with its bar mapped back to the source bar, plus pass number."""
        out = []
        for n in self.notes:
            ref = self.bars[n.bar_index]
            out.append((ScoreNote(ref.source_index, n.pos_ticks, n.pitch, n.dur_ticks, n.voice), ref.pass_number))
        return out

    def to_dict(self):
        return {
            "bars": [
                {"linear": b.linear_index, "source": b.source_index, "pass": b.pass_number} for b in self.bars
            ],
            "notes": [n.to_dict() for n in self.notes],
        }
