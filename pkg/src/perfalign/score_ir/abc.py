"""ABC rendering of a ScoreIR, one fixed-width text patch per bar.

Grammar of the rendered subset (unit length L:1/4, so a quarter note has
no length suffix):

    header  := "X:1\\nL:1/4\\nM:<num>/<den>\\nK:<key>"
    bar     := [ "|:" ] [ "[1" | "[2" ] [ "[M:<n>/<d>]" ] [ '"^' text '"' ]
               voice* ( "|" | ":|" )
    voice   := [ "[V:<v>]" ] event*            (voice tag only for multi-voice scores)
    event   := rest | note | chord
    rest    := "z" length
    note    := accidental? letter octave length
    chord   := "[" note+ "]" [ length ]        (shared length hoisted outside)
    length  := "" | n | "/" d | n "/" d        (multiples of a quarter)

Accidentals follow ABC semantics: the key signature applies by default and
an explicit accidental holds for that letter and octave until the barline.
Tokens are separated by single spaces. Patches are truncated to 64
characters and right-padded with NUL; truncations are reported, not raised.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .ir import TICKS_PER_QUARTER, ScoreIR, ScoreNote

PATCH_LEN = 64
PAD_CHAR = "\x00"
MAX_BARS = 50

KEY_NAMES = {-7: "Cb", -6: "Gb", -5: "Db", -4: "Ab", -3: "Eb", -2: "Bb", -1: "F", 0: "C",
             1: "G", 2: "D", 3: "A", 4: "E", 5: "B", 6: "F#", 7: "C#"}
SHARP_ORDER = "FCGDAEB"
SHARP_SPELLING = [("C", 0), ("C", 1), ("D", 0), ("D", 1), ("E", 0), ("F", 0),
                  ("F", 1), ("G", 0), ("G", 1), ("A", 0), ("A", 1), ("B", 0)]
FLAT_SPELLING = [("C", 0), ("D", -1), ("D", 0), ("E", -1), ("E", 0), ("F", 0),
                 ("G", -1), ("G", 0), ("A", -1), ("A", 0), ("B", -1), ("B", 0)]
ACCIDENTAL = {1: "^", -1: "_", 0: "="}


@dataclass(frozen=True)
class BarPatch:
    bar_index: int  # -1 for the header patch
    text: str
    full_length: int

    @property
    def truncated(self) -> bool:
        return self.full_length > PATCH_LEN


def key_alterations(fifths: int) -> dict[str, int]:
    alt = {letter: 0 for letter in "CDEFGAB"}
    if fifths > 0:
        for letter in SHARP_ORDER[:fifths]:
            alt[letter] = 1
    elif fifths < 0:
        for letter in SHARP_ORDER[::-1][:-fifths]:
            alt[letter] = -1
    return alt


def abc_length(ticks: int) -> str:
    frac = Fraction(ticks, TICKS_PER_QUARTER)
    if frac.denominator == 1:
        return "" if frac.numerator == 1 else str(frac.numerator)
    if frac.numerator == 1:
        return f"/{frac.denominator}"
    return f"{frac.numerator}/{frac.denominator}"


def _letter_octave(letter: str, octave: int) -> str:
    if octave >= 5:
        return letter.lower() + "'" * (octave - 5)
    return letter + "," * (4 - octave)


class _BarSpeller:
    def __init__(self, fifths: int):
        self.key_alt = key_alterations(fifths)
        self.table = FLAT_SPELLING if fifths < 0 else SHARP_SPELLING
        self.state: dict[tuple[str, int], int] = {}

    def spell(self, pitch: int) -> str:
        letter, alter = self.table[pitch % 12]
        octave = pitch // 12 - 1
        current = self.state.get((letter, octave), self.key_alt[letter])
        prefix = ""
        if alter != current:
            prefix = ACCIDENTAL[alter]
            self.state[(letter, octave)] = alter
        return prefix + _letter_octave(letter, octave)


def _render_voice(notes: list[ScoreNote], bar_len: int, speller: _BarSpeller) -> list[str]:
    groups: dict[int, list[ScoreNote]] = {}
    for n in notes:
        groups.setdefault(n.pos_ticks, []).append(n)
    tokens, cursor = [], 0
    for pos in sorted(groups):
        chord = sorted(groups[pos], key=lambda n: n.pitch)
        if pos > cursor:
            tokens.append("z" + abc_length(pos - cursor))
        if len(chord) == 1:
            n = chord[0]
            tokens.append(speller.spell(n.pitch) + abc_length(n.dur_ticks))
        elif len({n.dur_ticks for n in chord}) == 1:
            tokens.append("[" + "".join(speller.spell(n.pitch) for n in chord) + "]" + abc_length(chord[0].dur_ticks))
        else:
            tokens.append("[" + "".join(speller.spell(n.pitch) + abc_length(n.dur_ticks) for n in chord) + "]")
        cursor = max(cursor, pos + min(chord[0].dur_ticks, bar_len - pos))
    if cursor < bar_len:
        tokens.append("z" + abc_length(bar_len - cursor))
    return tokens


def render_bar(score: ScoreIR, bar: int, first_rendered: bool = False) -> str:
    """ABC text of one bar, untruncated."""
    marks = [m for m in score.repeats if m.bar_index == bar]
    kinds = {m.kind for m in marks}
    tokens = []
    if "forward" in kinds:
        tokens.append("|:")
    for m in marks:
        if m.kind == "volta_start":
            tokens.append(f"[{m.number}")
    sig_change = [s for s in score.time_sigs if s[0] == bar]
    if sig_change and not first_rendered:
        tokens.append(f"[M:{sig_change[0][1]}/{sig_change[0][2]}]")
    text = score.bar_text.get(bar)
    if text:
        clean = "".join(c if 32 <= ord(c) < 127 and c != '"' else "?" for c in text)
        tokens.append(f'"^{clean}"')
    bar_len = score.bar_length(bar)
    notes = score.notes_in_bar(bar)
    voices = sorted({n.voice for n in score.notes})
    speller = _BarSpeller(score.key_fifths)
    if len(voices) <= 1:
        tokens.extend(_render_voice(notes, bar_len, speller))
    else:
        for v in voices:
            tokens.append(f"[V:{v}]")
            tokens.extend(_render_voice([n for n in notes if n.voice == v], bar_len, speller))
    tokens.append(":|" if "backward" in kinds else "|")
    return " ".join(tokens)


def _patch(bar_index: int, text: str) -> BarPatch:
    clipped = text[:PATCH_LEN]
    return BarPatch(bar_index, clipped + PAD_CHAR * (PATCH_LEN - len(clipped)), len(text))


def render_header(score: ScoreIR, start_bar: int = 0) -> str:
    num, den = score.time_sig_at(start_bar)
    return f"X:1\nL:1/4\nM:{num}/{den}\nK:{KEY_NAMES.get(score.key_fifths, 'C')}"


def to_abc_interleaved(score: ScoreIR, max_bars: int = MAX_BARS, start_bar: int = 0) -> list[BarPatch]:
    """Header patch followed by one patch per bar from ``start_bar``."""
    if max_bars > MAX_BARS:
        raise ValueError(f"max_bars must be <= {MAX_BARS}")
    stop = min(score.bar_count, start_bar + max_bars)
    patches = [_patch(-1, render_header(score, start_bar))]
    for bar in range(start_bar, stop):
        patches.append(_patch(bar, render_bar(score, bar, first_rendered=(bar == start_bar))))
    return patches


def lossiness_report(patches: list[BarPatch]) -> list[dict]:
    return [{"bar": p.bar_index, "full_length": p.full_length, "kept": PATCH_LEN}
            for p in patches if p.truncated]
