"""Alignment records: the note-level result unit shared by aligner, tokenizer and metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import ValidationError
from ..perf_ir import PerfNote
from ..score_ir import ScoreNote

MATCH, INSERT, DELETE = "match", "insert", "delete"


@dataclass(frozen=True)
class AlignRecord:
    """One Match / Insert (extra performed note) / Delete (missed score note).

    ``score_note.bar_index`` is the source (folded) bar; ``score_pass`` is the
    pass through that bar (2 for the repeat of a repeated bar).
    ``perf_index`` / ``score_index`` point into the perf list and the unfolded
    score note list when known, else -1.
    """

    op: str
    perf_note: Optional[PerfNote] = None
    score_note: Optional[ScoreNote] = None
    score_pass: int = 0
    perf_index: int = -1
    score_index: int = -1

    @property
    def repeat_flag(self) -> bool:
        return self.score_pass > 1

    def validate(self):
        if self.op == MATCH:
            ok = self.perf_note is not None and self.score_note is not None
        elif self.op == INSERT:
            ok = self.perf_note is not None and self.score_note is None
        elif self.op == DELETE:
            ok = self.perf_note is None and self.score_note is not None
        else:
            raise ValidationError(f"unknown op {self.op!r}")
        if not ok:
            raise ValidationError(f"{self.op} record has the wrong note sides: {self}")
        if self.score_note is not None and self.score_pass < 1:
            raise ValidationError(f"score note without a pass number: {self}")
        if self.score_note is None and self.score_pass != 0:
            raise ValidationError(f"pass number on a record without score note: {self}")
        return self


def score_key(note: ScoreNote, pass_number: int):
    return (note.bar_index, note.pos_ticks, note.pitch, pass_number)


def op_counts(records) -> dict:
    counts = {MATCH: 0, INSERT: 0, DELETE: 0}
    for r in records:
        counts[r.op] += 1
    return counts
