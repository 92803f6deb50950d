"""Repeat unfolding: folded bars -> the linear bar order actually performed."""
from __future__ import annotations

from ..errors import RepeatStructureError, UnsupportedStructureError
from .ir import BarRef, ScoreIR, ScoreNote, UnfoldedScore


def _repeat_plan(score: ScoreIR):
    """Map each backward bar to its jump target and collect first-ending bars.

    Only one nesting level is supported. A backward mark jumps to the open
    forward mark; with none open it jumps to bar 0, unless an earlier repeat
    already closed (the anchor would then be ambiguous).
    """
    marks_at: dict[int, list] = {}
    for m in score.repeats:
        if m.kind.startswith("volta") and m.number not in (1, 2):
            raise RepeatStructureError(f"volta number {m.number} at bar {m.bar_index} unsupported")
        marks_at.setdefault(m.bar_index, []).append(m)

    jumps: dict[int, int] = {}
    open_forward = None
    closed_any = False
    for bar in range(score.bar_count):
        kinds = {m.kind for m in marks_at.get(bar, [])}
        if "forward" in kinds:
            if open_forward is not None:
                raise UnsupportedStructureError(
                    f"forward repeat at bar {bar} nested inside the one opened at bar {open_forward}")
            open_forward = bar
        if "backward" in kinds:
            if open_forward is not None:
                jumps[bar] = open_forward
            elif not closed_any:
                jumps[bar] = 0
            else:
                raise RepeatStructureError(f"backward repeat at bar {bar} has no reachable forward anchor")
            open_forward = None
            closed_any = True

    first_ending: set[int] = set()
    starts = sorted(m.bar_index for m in score.repeats if m.kind == "volta_start" and m.number == 1)
    for s in starts:
        ends = [m.bar_index for m in score.repeats
                if m.kind == "volta_end" and m.number == 1 and m.bar_index >= s]
        if ends:
            end = min(ends)
        else:
            backs = [b for b in jumps if b >= s]
            end = min(backs) if backs else s
        first_ending.update(range(s, end + 1))
    return jumps, first_ending


def unfold_repeats(score: ScoreIR) -> UnfoldedScore:
    jumps, first_ending = _repeat_plan(score)
    order: list[int] = []
    played: dict[int, int] = {}
    taken: set[int] = set()
    bar = 0
    # every bar is played at most twice, so this bounds the walk
    limit = 2 * score.bar_count + 1
    while bar < score.bar_count:
        if bar in first_ending and played.get(bar, 0) > 0:
            bar += 1
            continue
        order.append(bar)
        played[bar] = played.get(bar, 0) + 1
        if len(order) > limit:
            raise RepeatStructureError("repeat structure does not terminate")
        if bar in jumps and bar not in taken:
            taken.add(bar)
            bar = jumps[bar]
            continue
        bar += 1

    by_bar: dict[int, list[ScoreNote]] = {}
    for n in score.notes:
        by_bar.setdefault(n.bar_index, []).append(n)

    bars, notes, seen = [], [], {}
    for linear, src in enumerate(order):
        seen[src] = seen.get(src, 0) + 1
        bars.append(BarRef(linear, src, seen[src]))
        for n in by_bar.get(src, []):
            notes.append(ScoreNote(linear, n.pos_ticks, n.pitch, n.dur_ticks, n.voice))
    return UnfoldedScore(bars=bars, notes=notes, score=score)
