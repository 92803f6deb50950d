"""Seeded synthetic scores and verbatim performance renderings.

Used to build training corpora and the ground truth of the property tests:
a rendering knows exactly which performed note realizes which score note.
"""
from __future__ import annotations

import numpy as np

from .perf_ir import PerfNote, perf_sort_key
from .score_ir import ScoreIR, ScoreNote, UnfoldedScore, bar_ticks, note_sort_key

SIGNATURES = ((4, 4), (3, 4), (2, 4), (6, 8), (3, 8), (2, 2))
DURATIONS = (80, 160, 240, 320, 480, 640)


def random_score(rng: np.random.Generator, n_bars: int = 4, signatures=SIGNATURES, chord_prob: float = 0.25,
                 sig_change_prob: float = 0.0, pitch_range=(43, 88), grid: int = 80) -> ScoreIR:
    """Single-voice score with chords; onsets on a 16th-note grid."""
    sig = tuple(signatures[rng.integers(len(signatures))])
    time_sigs = [(0, *sig)]
    notes = []
    center = int(rng.integers(pitch_range[0] + 6, pitch_range[1] - 6))
    for bar in range(n_bars):
        if bar and rng.random() < sig_change_prob:
            new = tuple(signatures[rng.integers(len(signatures))])
            if new != sig:
                sig = new
                time_sigs.append((bar, *sig))
        length = bar_ticks(*sig)
        cursor = 0
        while cursor < length:
            dur = int(DURATIONS[rng.integers(len(DURATIONS))])
            dur = min(dur, length - cursor)
            if rng.random() < 0.1:  # rest
                cursor += dur
                continue
            center = int(np.clip(center + rng.integers(-4, 5), pitch_range[0] + 4, pitch_range[1] - 4))
            size = 1 + int(rng.random() < chord_prob) + int(rng.random() < chord_prob / 2)
            pitches = {center}
            while len(pitches) < size:
                pitches.add(int(np.clip(center + rng.choice([-12, -7, -5, -4, -3, 3, 4, 5, 7]),
                                        pitch_range[0], pitch_range[1])))
            for p in pitches:
                notes.append(ScoreNote(bar, cursor, p, dur, 1))
            cursor += max(grid, dur - dur % grid)
    return ScoreIR(time_sigs=time_sigs, notes=sorted(notes, key=note_sort_key), bar_count=n_bars)


def render_performance(unfolded: UnfoldedScore, rng: np.random.Generator, bpm: float = 100.0,
                       jitter: float = 0.0, start: float = 0.0, velocity_range=(30, 100),
                       articulation: float = 0.9):
    """Perform the unfolded score note for note.

    Chord members share one onset; ``jitter`` is the maximum per-onset timing
    perturbation as a fraction of the shortest inter-onset interval (kept
    below 0.5 so the order of onsets is preserved). Returns (notes, pairs)
    where pairs are (perf index, unfolded score index).
    """
    spt = 60.0 / bpm / 320
    ticks = unfolded.note_ticks()
    distinct = sorted(set(ticks))
    min_ioi = min((b - a for a, b in zip(distinct, distinct[1:])), default=320) * spt
    shift = {}
    for t in distinct:
        shift[t] = float(rng.uniform(-1, 1)) * min(jitter, 0.45) * min_ioi if jitter else 0.0
    items = []
    for j, (n, tick) in enumerate(zip(unfolded.notes, ticks)):
        onset = max(0.0, start + tick * spt + shift[tick])
        vel = int(rng.integers(velocity_range[0], velocity_range[1] + 1))
        items.append((PerfNote(onset_s=onset, dur_s=max(0.02, n.dur_ticks * spt * articulation), pitch=n.pitch,
                               velocity=vel), j))
    items.sort(key=lambda it: perf_sort_key(it[0]))
    perf = [it[0] for it in items]
    pairs = [(i, it[1]) for i, it in enumerate(items)]
    return perf, pairs
