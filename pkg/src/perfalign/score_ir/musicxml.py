"""Reader for the uncompressed score-partwise MusicXML subset.

Supported: divisions, time and key attributes, pitched notes, rests, chords,
ties, backup/forward, repeat barlines with first/second endings, and
direction words/dynamics (kept as opaque bar text). Grace notes and tuplets
that do not land on the integer tick grid are skipped with a warning.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET
from fractions import Fraction

from ..errors import ScoreParseError
from .ir import PITCH_MAX, PITCH_MIN, TICKS_PER_QUARTER, RepeatMark, ScoreIR, ScoreNote, bar_ticks, note_sort_key

STEP_SEMITONES = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}


def _text(el, path, default=None):
    found = el.find(path)
    if found is None or found.text is None:
        return default
    return found.text.strip()


def _midi_pitch(pitch_el) -> int:
    step = _text(pitch_el, "step")
    octave = int(_text(pitch_el, "octave"))
    alter = Fraction(_text(pitch_el, "alter", "0"))
    if alter.denominator != 1:
        raise ValueError("microtonal alter")
    return 12 * (octave + 1) + STEP_SEMITONES[step] + int(alter)


def _line_map(document: str):
    """Element -> source line, via the incremental parser's positions."""
    lines = {}
    parser = ET.XMLPullParser(events=("start",))
    # feeding line by line lets us attribute each start tag to its line
    for lineno, line in enumerate(document.splitlines(keepends=True), start=1):
        parser.feed(line)
        for _, el in parser.read_events():
            lines[el] = lineno
    parser.close()
    root = None
    for el in lines:
        root = el
        break
    return root, lines


def parse_musicxml(document: str) -> ScoreIR:
    try:
        root, lines = _line_map(document)
    except ET.ParseError as exc:
        line, col = exc.position
        raise ScoreParseError(f"malformed XML: {exc.msg if hasattr(exc, 'msg') else exc}", line=line,
                              location=f"column {col}") from None
    if root is None:
        raise ScoreParseError("empty document", line=1)
    if root.tag != "score-partwise":
        raise ScoreParseError(f"unsupported root element <{root.tag}>", line=lines.get(root))

    ir = ScoreIR()
    parts = root.findall("part")
    if not parts:
        return ir

    bar_count = max(len(p.findall("measure")) for p in parts)
    ir.bar_count = bar_count
    time_sigs: dict[int, tuple[int, int]] = {}
    repeats: list[RepeatMark] = []
    notes: list[ScoreNote] = []

    for part_no, part in enumerate(parts):
        divisions = None
        current_sig = (4, 4)
        open_ties: dict[tuple[int, int], int] = {}  # (voice, pitch) -> index in part_notes
        part_notes: list[ScoreNote] = []
        for bar, measure in enumerate(part.findall("measure")):
            cursor = Fraction(0)
            last_onset = Fraction(0)
            for el in measure:
                where = f"part {part.get('id', part_no)}, measure {measure.get('number', bar + 1)}"
                line = lines.get(el)
                if el.tag == "attributes":
                    d = _text(el, "divisions")
                    if d is not None:
                        divisions = Fraction(d)
                    t = el.find("time")
                    if t is not None and _text(t, "beats") is not None:
                        try:
                            sig = (int(_text(t, "beats")), int(_text(t, "beat-type")))
                        except (TypeError, ValueError):
                            raise ScoreParseError("unsupported time signature", line=line, location=where) from None
                        current_sig = sig
                        if part_no == 0 and (bar not in time_sigs or bar == 0):
                            time_sigs[bar] = sig
                    k = el.find("key")
                    if k is not None and part_no == 0 and bar == 0 and _text(k, "fifths") is not None:
                        ir.key_fifths = int(_text(k, "fifths"))
                elif el.tag in ("backup", "forward"):
                    dur = _scaled(_text(el, "duration", "0"), divisions, line, where)
                    cursor = cursor - dur if el.tag == "backup" else cursor + dur
                elif el.tag == "barline" and part_no == 0:
                    repeats.extend(_barline_marks(el, bar, ir.warnings, where))
                elif el.tag == "direction" and part_no == 0:
                    words = [w.text.strip() for w in el.iter("words") if w.text and w.text.strip()]
                    dyn = el.find(".//dynamics")
                    if dyn is not None:
                        words.extend(child.tag for child in dyn)
                    if words:
                        prev = ir.bar_text.get(bar)
                        ir.bar_text[bar] = " ".join(([prev] if prev else []) + words)
                elif el.tag == "note":
                    is_chord = el.find("chord") is not None
                    if el.find("grace") is not None:
                        ir.warnings.append(f"{where}: grace note skipped")
                        continue
                    dur = Fraction(0) if el.find("duration") is None else \
                        _raw_scaled(_text(el, "duration"), divisions, line, where)
                    onset = last_onset if is_chord else cursor
                    if not is_chord:
                        last_onset = cursor
                        cursor += dur
                    if el.find("rest") is not None:
                        continue
                    pitch_el = el.find("pitch")
                    if pitch_el is None:
                        ir.warnings.append(f"{where}: unpitched note skipped")
                        continue
                    if onset.denominator != 1 or dur.denominator != 1:
                        if el.find("time-modification") is not None:
                            ir.warnings.append(f"{where}: tuplet off the tick grid skipped")
                            continue
                        raise ScoreParseError("duration not representable at 320 ticks per quarter", line=line,
                                              location=where)
                    try:
                        pitch = _midi_pitch(pitch_el)
                    except (TypeError, ValueError, KeyError):
                        raise ScoreParseError("unreadable pitch", line=line, location=where) from None
                    if not PITCH_MIN <= pitch <= PITCH_MAX:
                        raise ScoreParseError(f"pitch {pitch} outside piano range", line=line, location=where)
                    voice = int(_text(el, "voice", "1")) + 10 * part_no
                    ties = {t.get("type") for t in el.findall("tie")}
                    key = (voice, pitch)
                    if "stop" in ties and key in open_ties:
                        idx = open_ties.pop(key)
                        prev = part_notes[idx]
                        part_notes[idx] = ScoreNote(prev.bar_index, prev.pos_ticks, prev.pitch,
                                                    prev.dur_ticks + int(dur), prev.voice)
                        if "start" in ties:
                            open_ties[key] = idx
                        continue
                    if dur <= 0:
                        ir.warnings.append(f"{where}: zero-length note skipped")
                        continue
                    part_notes.append(ScoreNote(bar, int(onset), pitch, int(dur), voice))
                    if "start" in ties:
                        open_ties[key] = len(part_notes) - 1
            if part_no == 0 and bar not in time_sigs and bar == 0:
                time_sigs[0] = current_sig
        notes.extend(part_notes)

    ir.time_sigs = [(b, *time_sigs[b]) for b in sorted(time_sigs)]
    # drop redundant restatements of the current signature
    compact = []
    for entry in ir.time_sigs:
        if not compact or compact[-1][1:] != entry[1:]:
            compact.append(entry)
    ir.time_sigs = compact
    for n in notes:
        if n.pos_ticks >= bar_ticks(*ir.time_sig_at(n.bar_index)) or n.pos_ticks < 0:
            raise ScoreParseError(f"note onset {n.pos_ticks} outside bar", location=f"measure index {n.bar_index}")
    ir.notes = sorted(notes, key=note_sort_key)
    ir.repeats = sorted(set(repeats), key=lambda r: (r.bar_index, REPEAT_ORDER[r.kind], r.number))
    return ir


REPEAT_ORDER = {"forward": 0, "volta_start": 1, "volta_end": 2, "backward": 3}


def _raw_scaled(value, divisions, line, where) -> Fraction:
    if divisions is None:
        raise ScoreParseError("duration before <divisions>", line=line, location=where)
    return Fraction(value) * TICKS_PER_QUARTER / divisions


def _scaled(value, divisions, line, where) -> Fraction:
    ticks = _raw_scaled(value, divisions, line, where)
    if ticks.denominator != 1:
        raise ScoreParseError("offset not representable at 320 ticks per quarter", line=line, location=where)
    return ticks


def _barline_marks(el, bar, warnings, where):
    marks = []
    rep = el.find("repeat")
    if rep is not None:
        direction = rep.get("direction")
        if direction in ("forward", "backward"):
            marks.append(RepeatMark(direction, bar))
    ending = el.find("ending")
    if ending is not None:
        try:
            number = int(ending.get("number", "1").replace(" ", "").split(",")[0])
        except ValueError:
            number = 0
        if number not in (1, 2):
            warnings.append(f"{where}: ending number {ending.get('number')!r} unsupported, ignored")
        else:
            kind = "volta_start" if ending.get("type") == "start" else "volta_end"
            marks.append(RepeatMark(kind, bar, number))
    return marks
