"""Score parsing, repeat unfolding and ABC bar patching."""
from .abc import PAD_CHAR, PATCH_LEN, BarPatch, lossiness_report, render_bar, to_abc_interleaved
from .ir import (
    TICKS_PER_QUARTER,
    BarRef,
    RepeatMark,
    ScoreIR,
    ScoreNote,
    UnfoldedScore,
    bar_ticks,
    note_sort_key,
)
from .musicxml import parse_musicxml
from .unfold import unfold_repeats

__all__ = [
    "PAD_CHAR", "PATCH_LEN", "TICKS_PER_QUARTER", "BarPatch", "BarRef", "RepeatMark", "ScoreIR",
    "ScoreNote", "UnfoldedScore", "bar_ticks", "lossiness_report", "note_sort_key", "parse_musicxml",
    "render_bar", "to_abc_interleaved", "unfold_repeats",
]
