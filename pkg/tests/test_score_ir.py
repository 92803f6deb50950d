import numpy as np
import pytest
from hypothesis import given, strategies as st

from musicxml_writer import render_musicxml
from perfalign.errors import RepeatStructureError, ScoreParseError, UnsupportedStructureError
from perfalign.score_ir import (
    PAD_CHAR,
    PATCH_LEN,
    RepeatMark,
    ScoreIR,
    ScoreNote,
    lossiness_report,
    parse_musicxml,
    render_bar,
    to_abc_interleaved,
    unfold_repeats,
)
from perfalign.synth import random_score

HEAD = '<?xml version="1.0"?>\n<score-partwise version="3.1">\n<part-list><score-part id="P1"/></part-list>\n'


def doc(*measures, divisions=1):
    body = []
    for k, m in enumerate(measures):
        attrs = (f"<attributes><divisions>{divisions}</divisions><time><beats>4</beats><beat-type>4</beat-type>"
                 f"</time></attributes>\n") if k == 0 else ""
        body.append(f'<measure number="{k + 1}">\n{attrs}{m}\n</measure>\n')
    return HEAD + '<part id="P1">\n' + "".join(body) + "</part>\n</score-partwise>\n"


def note(step, octave, dur, extra="", alter=0):
    alt = f"<alter>{alter}</alter>" if alter else ""
    return f"<note>{extra}<pitch><step>{step}</step>{alt}<octave>{octave}</octave></pitch><duration>{dur}</duration></note>"


def score_with(bars, notes_per_bar=1, repeats=()):
    notes = [ScoreNote(b, 0, 60 + b, 320) for b in range(bars) for _ in range(notes_per_bar)]
    return ScoreIR(time_sigs=[(0, 4, 4)], notes=notes, repeats=list(repeats), bar_count=bars)


# ---- parse_musicxml --------------------------------------------------------

def test_single_quarter_c4():
    ir = parse_musicxml(doc(note("C", 4, 1) + '<note><rest/><duration>3</duration></note>'))
    assert ir.bar_count == 1
    assert ir.notes == [ScoreNote(0, 0, 60, 320)]
    assert ir.time_sigs == [(0, 4, 4)]


def test_empty_part_list():
    ir = parse_musicxml(HEAD + "</score-partwise>\n")
    assert ir.bar_count == 0 and ir.notes == []


def test_tied_half_notes_across_barline_merge():
    start = note("C", 4, 2, '<tie type="start"/>') + '<note><rest/><duration>2</duration></note>'
    stop = note("C", 4, 2, '<tie type="stop"/>') + '<note><rest/><duration>2</duration></note>'
    # the tied note starts on beat 3 of bar 1 and ends on beat 2 of bar 2
    ir = parse_musicxml(doc('<note><rest/><duration>2</duration></note>' + note("C", 4, 2, '<tie type="start"/>'),
                            note("C", 4, 2, '<tie type="stop"/>') + '<note><rest/><duration>2</duration></note>'))
    assert ir.notes == [ScoreNote(0, 640, 60, 1280)]
    ir2 = parse_musicxml(doc(start, stop))
    assert ir2.notes == [ScoreNote(0, 0, 60, 1280)]


def test_divisions_rescaled_and_chords_grouped():
    m = note("E", 4, 3) + note("G", 4, 3, "<chord/>") + note("C", 4, 3, "<chord/>") + note("F", 4, 9, alter=1)
    ir = parse_musicxml(doc(m, divisions=3))
    assert ir.notes == [ScoreNote(0, 0, 60, 320), ScoreNote(0, 0, 64, 320), ScoreNote(0, 0, 67, 320),
                        ScoreNote(0, 320, 66, 960)]


def test_backup_and_voices():
    m = (note("C", 5, 4, "") .replace("</note>", "<voice>1</voice></note>")
         + "<backup><duration>4</duration></backup>"
         + note("C", 3, 2).replace("</note>", "<voice>2</voice></note>")
         + note("G", 3, 2).replace("</note>", "<voice>2</voice></note>"))
    ir = parse_musicxml(doc(m))
    assert [(n.pos_ticks, n.pitch, n.voice) for n in ir.notes] == [(0, 48, 2), (0, 72, 1), (640, 55, 2)]


def test_malformed_xml_reports_line():
    bad = HEAD + '<part id="P1">\n<measure number="1">\n<note></measure>\n</part></score-partwise>'
    with pytest.raises(ScoreParseError) as exc:
        parse_musicxml(bad)
    assert exc.value.line == 6


def test_pitch_out_of_range_rejected_with_location():
    with pytest.raises(ScoreParseError) as exc:
        parse_musicxml(doc(note("C", 0, 4)))
    assert "measure 1" in str(exc.value) and exc.value.line is not None


def test_grace_note_skipped_with_warning():
    ir = parse_musicxml(doc('<note><grace/><pitch><step>D</step><octave>4</octave></pitch></note>' + note("C", 4, 4)))
    assert ir.notes == [ScoreNote(0, 0, 60, 1280)]
    assert any("grace" in w for w in ir.warnings)


def test_offgrid_tuplet_skipped_with_warning():
    trip = '<time-modification><actual-notes>7</actual-notes><normal-notes>4</normal-notes></time-modification>'
    m = (note("C", 4, 7) + note("D", 4, 1).replace("</duration>", f"</duration>{trip}"))
    ir = parse_musicxml(doc(m, divisions=7))
    assert [n.pitch for n in ir.notes] == [60]
    assert any("tuplet" in w for w in ir.warnings)


def test_directions_kept_as_bar_text_and_key():
    m = ('<attributes><key><fifths>-2</fifths></key></attributes>'
         '<direction><direction-type><dynamics><p/></dynamics></direction-type></direction>'
         '<direction><direction-type><words>dolce</words></direction-type></direction>' + note("C", 4, 4))
    ir = parse_musicxml(doc(m))
    assert ir.key_fifths == -2
    assert ir.bar_text == {0: "p dolce"}


def test_repeat_barlines_parsed():
    m1 = '<barline location="left"><repeat direction="forward"/></barline>' + note("C", 4, 4)
    m2 = note("D", 4, 4) + '<barline location="right"><repeat direction="backward"/></barline>'
    ir = parse_musicxml(doc(m1, m2))
    assert ir.repeats == [RepeatMark("forward", 0), RepeatMark("backward", 1)]


# ---- unfold_repeats --------------------------------------------------------

def linear(score):
    u = unfold_repeats(score)
    return [(b.source_index, b.pass_number) for b in u.bars]


def test_unfold_single_repeat_on_b():
    s = score_with(2, repeats=[RepeatMark("forward", 1), RepeatMark("backward", 1)])
    assert linear(s) == [(0, 1), (1, 1), (1, 2)]


def test_unfold_identity_without_marks():
    s = score_with(5)
    u = unfold_repeats(s)
    assert [(b.linear_index, b.source_index, b.pass_number) for b in u.bars] == [(k, k, 1) for k in range(5)]
    assert u.notes == s.notes


def test_unfold_volta_hand_trace():
    marks = [RepeatMark("forward", 1), RepeatMark("volta_start", 2, 1), RepeatMark("volta_end", 2, 1),
             RepeatMark("backward", 2), RepeatMark("volta_start", 3, 2)]
    assert [src for src, _ in linear(score_with(4, repeats=marks))] == [0, 1, 2, 1, 3]


def test_unfold_backward_without_forward_goes_to_start():
    s = score_with(3, repeats=[RepeatMark("backward", 1)])
    assert [src for src, _ in linear(s)] == [0, 1, 0, 1, 2]


def test_unfold_unreachable_anchor_raises():
    s = score_with(4, repeats=[RepeatMark("backward", 1), RepeatMark("backward", 3)])
    with pytest.raises(RepeatStructureError):
        unfold_repeats(s)


def test_unfold_nested_forward_unsupported():
    s = score_with(4, repeats=[RepeatMark("forward", 0), RepeatMark("forward", 1), RepeatMark("backward", 2)])
    with pytest.raises(UnsupportedStructureError):
        unfold_repeats(s)


def test_unfolded_notes_copy_source_except_bar():
    s = score_with(3, notes_per_bar=2, repeats=[RepeatMark("forward", 1), RepeatMark("backward", 2)])
    u = unfold_repeats(s)
    for n, (src, pass_no) in zip(u.notes, u.source_notes()):
        assert src in s.notes
        assert (n.pos_ticks, n.pitch, n.dur_ticks, n.voice) == (src.pos_ticks, src.pitch, src.dur_ticks, src.voice)
        assert pass_no == u.bars[n.bar_index].pass_number


@given(st.integers(1, 12), st.data())
def test_note_conservation(bars, data):
    start = data.draw(st.integers(0, bars - 1))
    end = data.draw(st.integers(start, bars - 1))
    s = score_with(bars, notes_per_bar=2, repeats=[RepeatMark("forward", start), RepeatMark("backward", end)])
    u = unfold_repeats(s)
    per_bar = {b: len(s.notes_in_bar(b)) for b in range(bars)}
    assert len(u.notes) == sum(per_bar[b.source_index] for b in u.bars)
    assert [b.linear_index for b in u.bars] == list(range(len(u.bars)))
    assert all(b.pass_number >= 1 for b in u.bars)


# ---- ABC patches -----------------------------------------------------------

def test_abc_quarter_notes_bar():
    s = ScoreIR(time_sigs=[(0, 4, 4)], notes=[ScoreNote(0, 320 * k, p, 320) for k, p in enumerate((60, 62, 64, 65))],
                bar_count=1)
    patches = to_abc_interleaved(s)
    assert patches[0].bar_index == -1 and patches[0].text.startswith("X:1\nL:1/4\nM:4/4\nK:C")
    assert patches[1].text == "C D E F |" + PAD_CHAR * (PATCH_LEN - 9)


def test_abc_repeat_glyphs():
    s = score_with(3, repeats=[RepeatMark("forward", 1), RepeatMark("backward", 1)])
    assert render_bar(s, 1).startswith("|:")
    assert render_bar(s, 1).endswith(":|")
    v = score_with(3, repeats=[RepeatMark("volta_start", 1, 1), RepeatMark("volta_start", 2, 2)])
    assert render_bar(v, 1).startswith("[1") and render_bar(v, 2).startswith("[2")


def test_abc_truncation_recorded():
    notes = [ScoreNote(0, 40 * k, 40 + (k % 30), 40) for k in range(32)]
    s = ScoreIR(time_sigs=[(0, 4, 4)], notes=notes, bar_count=1)
    full = render_bar(s, 0, first_rendered=True)
    assert len(full) > PATCH_LEN
    patches = to_abc_interleaved(s)
    assert patches[1].text == full[:PATCH_LEN]
    assert lossiness_report(patches) == [{"bar": 0, "full_length": len(full), "kept": PATCH_LEN}]


def test_abc_max_bars_limit():
    s = score_with(60)
    assert len(to_abc_interleaved(s)) == 51
    with pytest.raises(ValueError):
        to_abc_interleaved(s, max_bars=51)


@given(st.integers(0, 2**31 - 1))
def test_every_patch_is_64_chars(seed):
    s = random_score(np.random.default_rng(seed), n_bars=3, sig_change_prob=0.5)
    assert all(len(p.text) == PATCH_LEN for p in to_abc_interleaved(s))


# ---- round trip through the test renderer ---------------------------------

@given(st.integers(0, 2**31 - 1), st.sampled_from([320, 160, 80]))
def test_musicxml_round_trip(seed, divisions):
    rng = np.random.default_rng(seed)
    s = random_score(rng, n_bars=int(rng.integers(1, 6)), sig_change_prob=0.3)
    if s.bar_count >= 2 and rng.random() < 0.5:
        a = int(rng.integers(0, s.bar_count - 1))
        s.repeats = [RepeatMark("forward", a), RepeatMark("backward", a + 1)]
    s.key_fifths = int(rng.integers(-3, 4))
    if rng.random() < 0.5:
        s.bar_text = {0: "mf cresc."}
    assert parse_musicxml(render_musicxml(s, divisions)) == s
