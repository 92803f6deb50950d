import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perfalign.aligner import (
    AlignParams,
    INF,
    align_bruteforce,
    align_cost,
    align_notes,
    read_match_tsv,
    select_score_window,
    solve_bruteforce,
    solve_dp,
    write_match_tsv,
)
from perfalign.errors import AlignmentSizeError
from perfalign.perf_ir import PerfNote
from perfalign.score_ir import RepeatMark, ScoreIR, ScoreNote, unfold_repeats
from perfalign.synth import random_score, render_performance
from perfalign.tokenizer import op_counts

C_MAJOR = (60, 62, 64, 65)


def scale_score(pitches=C_MAJOR, repeats=()):
    notes = [ScoreNote(k // 4, 320 * (k % 4), p, 320) for k, p in enumerate(pitches)]
    return ScoreIR(time_sigs=[(0, 4, 4)], notes=notes, repeats=list(repeats), bar_count=(len(pitches) + 3) // 4)


def played(pitches, ioi=0.5):
    return [PerfNote(k * ioi, ioi * 0.9, p, 64) for k, p in enumerate(pitches)]


def test_identity_alignment_all_match():
    u = unfold_repeats(scale_score())
    recs = align_notes(u, played(C_MAJOR))
    assert [r.op for r in recs] == ["match"] * 4
    assert [(r.perf_index, r.score_index) for r in recs] == [(k, k) for k in range(4)]
    assert not any(r.repeat_flag for r in recs)


def test_extra_note_is_insert():
    perf = played(C_MAJOR)
    perf.insert(2, PerfNote(0.55, 0.1, 61, 40))
    recs = align_notes(unfold_repeats(scale_score()), perf)
    assert [r.op for r in recs] == ["match", "match", "insert", "match", "match"]
    assert recs[2].perf_note.pitch == 61


def test_missed_note_is_delete():
    perf = [n for n in played(C_MAJOR) if n.pitch != 64]
    recs = align_notes(unfold_repeats(scale_score()), perf)
    assert [r.op for r in recs] == ["match", "match", "delete", "match"]


def test_repeat_pass_flagged():
    s = scale_score(C_MAJOR * 2, repeats=[RepeatMark("forward", 1), RepeatMark("backward", 1)])
    u = unfold_repeats(s)
    perf = played(C_MAJOR * 3)
    recs = align_notes(u, perf)
    assert [r.op for r in recs] == ["match"] * 12
    assert [r.repeat_flag for r in recs] == [False] * 8 + [True] * 4
    assert all(r.score_pass == (2 if r.repeat_flag else 1) for r in recs)


def test_empty_inputs():
    u = unfold_repeats(scale_score())
    assert [r.op for r in align_notes(u, [])] == ["delete"] * 4
    empty = unfold_repeats(ScoreIR(time_sigs=[(0, 4, 4)], notes=[], bar_count=0))
    assert [r.op for r in align_notes(empty, played(C_MAJOR))] == ["insert"] * 4


def test_bruteforce_size_bound():
    u = unfold_repeats(scale_score(C_MAJOR * 2))
    with pytest.raises(AlignmentSizeError):
        align_bruteforce(u, played(C_MAJOR + (67,)))


def reference_dp(cost, gap):
    """Plain textbook O(nm) edit-distance table, used as a second oracle for the cost."""
    n, m = cost.shape
    d = np.zeros((n + 1, m + 1), dtype=object)
    d[:, 0] = [gap * i for i in range(n + 1)]
    d[0, :] = [gap * j for j in range(m + 1)]
    for i, j in itertools.product(range(1, n + 1), range(1, m + 1)):
        best = min(d[i - 1, j] + gap, d[i, j - 1] + gap)
        if cost[i - 1, j - 1] < INF:
            best = min(best, d[i - 1, j - 1] + int(cost[i - 1, j - 1]))
        d[i, j] = best
    return d[n, m]


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 2**31 - 1))
def test_dp_matches_bruteforce_on_random_costs(n, m, seed):
    rng = np.random.default_rng(seed)
    cost = rng.integers(0, 4, size=(n, m)).astype(np.int64) * 500_000
    cost[rng.random((n, m)) < 0.4] = INF
    gap = int(rng.integers(1, 4)) * 500_000
    dp = solve_dp(cost, gap)
    bf = solve_bruteforce(cost, gap)
    assert dp == bf
    assert dp[0] == reference_dp(cost, gap)


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1))
def test_align_notes_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(0, 7))
    n = int(rng.integers(0, 13 - m))
    score = ScoreIR(time_sigs=[(0, 4, 4)], bar_count=2, notes=sorted(
        ScoreNote(int(b), int(p) * 160, int(q), 160) for b, p, q in
        zip(rng.integers(0, 2, m), rng.integers(0, 8, m), rng.integers(60, 64, m))))
    perf = sorted((PerfNote(float(t), 0.2, int(q), 64) for t, q in
                   zip(np.round(rng.uniform(0, 4, n), 3), rng.integers(60, 64, n))),
                  key=lambda x: (x.onset_s, x.pitch))
    u = unfold_repeats(score)
    assert align_cost(u, perf) == align_cost(u, perf, solver=solve_bruteforce)
    assert align_notes(u, perf) == align_bruteforce(u, perf)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_conservation_and_monotonicity(seed):
    rng = np.random.default_rng(seed)
    u = unfold_repeats(random_score(rng, n_bars=3))
    perf, _ = render_performance(u, rng, jitter=0.2)
    perf = [p for p in perf if rng.random() > 0.2]
    recs = align_notes(u, perf)
    c = op_counts(recs)
    assert c["match"] + c["insert"] == len(perf)
    assert c["match"] + c["delete"] == len(u.notes)
    pairs = [(r.perf_index, r.score_index) for r in recs if r.op == "match"]
    assert pairs == sorted(pairs) and [j for _, j in pairs] == sorted(j for _, j in pairs)
    assert all(r.perf_note.pitch == r.score_note.pitch for r in recs if r.op == "match")


def test_gap_penalty_controls_tradeoff():
    # a note played 0.4 s late at 0.5 s spacing costs 0.8 as a match
    perf = played(C_MAJOR)
    perf[2] = PerfNote(1.4, 0.45, 64, 64)
    u = unfold_repeats(scale_score())
    cheap_gap = align_notes(u, perf, AlignParams(gap_penalty=0.1, refits=0, pitch_init=False))
    dear_gap = align_notes(u, perf, AlignParams(gap_penalty=5.0, refits=0, pitch_init=False))
    assert [r.op for r in dear_gap] == ["match"] * 4
    assert "insert" in [r.op for r in cheap_gap]


def test_select_window_short_piece_is_whole_score():
    s = scale_score(C_MAJOR * 10)
    assert select_score_window(s, (0.0, 5.0)) == (0, 10)


def test_select_window_proportional_second_half():
    s = ScoreIR(time_sigs=[(0, 4, 4)], notes=[], bar_count=100)
    lo, hi = select_score_window(s, (60.0, 100.0), perf_duration=120.0)
    assert (lo, hi) == (48, 86)
    assert lo >= 40 and hi - lo <= 50


def test_select_window_from_prior_alignment():
    s = ScoreIR(time_sigs=[(0, 4, 4)], notes=[], bar_count=100)
    from perfalign.tokenizer import AlignRecord
    prior = [AlignRecord("match", PerfNote(t, 0.1, 60, 64), ScoreNote(b, 0, 60, 320), 1)
             for t, b in [(1.0, 10), (5.0, 20), (9.0, 30), (20.0, 70)]]
    assert select_score_window(s, (4.0, 10.0), prior) == (18, 33)


def test_select_window_caps_at_50_bars():
    s = ScoreIR(time_sigs=[(0, 4, 4)], notes=[], bar_count=200)
    lo, hi = select_score_window(s, (0.0, 60.0), perf_duration=100.0)
    assert hi - lo == 50


def test_match_tsv_round_trip():
    s = scale_score(C_MAJOR * 2, repeats=[RepeatMark("forward", 1), RepeatMark("backward", 1)])
    perf = played(C_MAJOR * 3)
    perf.pop(5)
    perf.insert(0, PerfNote(0.0, 0.1, 90, 10))
    recs = align_notes(unfold_repeats(s), perf)
    text = write_match_tsv(recs)
    assert text.splitlines()[0].startswith("perf_index\tscore_linear_index\top\trepeat_flag\tperf_onset_s")
    assert read_match_tsv("# provenance\n" + text) == recs
