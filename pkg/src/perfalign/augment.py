"""Seeded corpus augmentation: score modulation, performance mistakes, repeat simulation.

Every function is a pure function of (inputs, seed) and returns a JSON-ready
change log from which the ground-truth alignment can be rebuilt (see the
``*_truth`` helpers) without running the aligner.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .aligner import records_from_pairs
from .errors import AugmentError
from .perf_ir import PITCH_MAX, PITCH_MIN, PerfNote, perf_sort_key
from .score_ir import RepeatMark, ScoreIR, ScoreNote, note_sort_key, unfold_repeats
from .tokenizer.records import MATCH

NONZERO_SHIFTS = (-5, -4, -3, -2, -1, 1, 2, 3, 4, 5)


def _valid_shifts(pitch, taken, magnitudes=NONZERO_SHIFTS):
    return [s for s in magnitudes if PITCH_MIN <= pitch + s <= PITCH_MAX and pitch + s not in taken]


def modulate_score(score: ScoreIR, ratio: float = 0.10, seed: int = 0):
    """Alter floor(ratio * N) notes: each is pitch-shifted by a nonzero amount in
    [-5, 5] with probability 0.5, otherwise deleted.

    Shifts that would leave the piano range or collide with another note at
    the same onset are excluded from the draw; a note with no valid shift is
    deleted instead.
    """
    if not 0 <= ratio <= 1:
        raise AugmentError(f"ratio {ratio} outside [0, 1]")
    rng = np.random.default_rng(seed)
    notes = list(score.notes)
    k = math.floor(ratio * len(notes))
    chosen = sorted(rng.choice(len(notes), size=k, replace=False).tolist()) if k else []
    onset_pitches: dict[tuple[int, int], set] = {}
    for n in notes:
        onset_pitches.setdefault((n.bar_index, n.pos_ticks), set()).add(n.pitch)
    edits, deleted = [], set()
    for idx in chosen:
        n = notes[idx]
        base = {"index": idx, "bar": n.bar_index, "pos": n.pos_ticks, "voice": n.voice, "pitch": n.pitch}
        shift_it = rng.random() < 0.5
        taken = onset_pitches[(n.bar_index, n.pos_ticks)]
        options = _valid_shifts(n.pitch, taken)
        if shift_it and options:
            s = int(options[rng.integers(len(options))])
            taken.discard(n.pitch)
            taken.add(n.pitch + s)
            notes[idx] = replace(n, pitch=n.pitch + s)
            edits.append({**base, "op": "shift", "new_pitch": n.pitch + s})
        else:
            deleted.add(idx)
            taken.discard(n.pitch)
            edits.append({**base, "op": "delete"})
    new_notes = sorted((n for i, n in enumerate(notes) if i not in deleted), key=note_sort_key)
    new = replace(score, notes=new_notes, warnings=[])
    return new, {"kind": "score", "seed": seed, "ratio": ratio, "edits": edits}


def modulate_performance(perf, rates=None, seed: int = 0):
    """Symbolic mistake injection on a performance.

    ``rates`` holds insert / delete / shift fractions in [0, 0.3]; counts are
    floor(rate * N). Deleted and shifted notes are disjoint. Inserted notes
    duplicate a random original note 1 or 2 semitones away with a 30-80 ms
    later onset; shifts move pitch by 1..5 semitones either way.
    """
    rates = {"insert": 0.0, "delete": 0.0, "shift": 0.0, **(rates or {})}
    for name, r in rates.items():
        if not 0 <= r <= 0.3:
            raise AugmentError(f"{name} rate {r} outside [0, 0.3]")
    rng = np.random.default_rng(seed)
    n = len(perf)
    n_del = math.floor(rates["delete"] * n)
    n_shift = math.floor(rates["shift"] * n)
    n_ins = math.floor(rates["insert"] * n)
    if n_del + n_shift > n:
        raise AugmentError("more deletions and shifts than notes")
    order = rng.permutation(n).tolist() if n else []
    deleted = set(order[:n_del])
    shifted = order[n_del:n_del + n_shift]

    items = []  # (note, origin index or -1, tag)
    edits = []
    notes = list(perf)
    for idx in shifted:
        note = notes[idx]
        options = _valid_shifts(note.pitch, {note.pitch})
        s = int(options[rng.integers(len(options))])
        notes[idx] = replace(note, pitch=note.pitch + s)
        edits.append({"op": "shift", "orig_index": idx, "pitch": note.pitch, "new_pitch": note.pitch + s})
    for idx in sorted(deleted):
        edits.append({"op": "delete", "orig_index": idx, "pitch": perf[idx].pitch, "onset_s": perf[idx].onset_s})
    shifted_set = set(shifted)
    for idx, note in enumerate(notes):
        if idx not in deleted:
            items.append((note, idx, "shift" if idx in shifted_set else "keep"))
    for _ in range(n_ins):
        src = perf[int(rng.integers(n))]
        options = _valid_shifts(src.pitch, {src.pitch}, (-2, -1, 1, 2))
        s = int(options[rng.integers(len(options))])
        jitter = float(rng.uniform(0.030, 0.080))
        new = PerfNote(onset_s=src.onset_s + jitter, dur_s=src.dur_s, pitch=src.pitch + s, velocity=src.velocity)
        items.append((new, -1, "insert"))
        edits.append({"op": "insert", "pitch": new.pitch, "onset_s": new.onset_s, "source_pitch": src.pitch})
    items.sort(key=lambda it: perf_sort_key(it[0]))
    origin = [it[1] if it[2] == "keep" else -1 for it in items]
    return [it[0] for it in items], {"kind": "performance", "seed": seed, "rates": rates, "edits": edits,
                                     "origin": origin}


def simulate_repeats(score: ScoreIR, perf, prob: float = 0.20, seed: int = 0, alignment=None):
    """Wrap a random 1-8 bar span in repeat marks and splice a second
    performance pass of its matched notes.

    The second pass starts one mean inter-onset interval after the last
    offset of the first pass; every later note is delayed by the same shift.
    Returns (score, perf, provenance); provenance is None when nothing was
    applied.
    """
    if score.repeats:
        return score, list(perf), None
    rng = np.random.default_rng(seed)
    if rng.random() >= prob or score.bar_count == 0:
        return score, list(perf), None
    if alignment is None:
        raise AugmentError("repeat simulation needs an alignment to locate the performed span")
    span_len = int(rng.integers(1, min(8, score.bar_count) + 1))
    start = int(rng.integers(0, score.bar_count - span_len + 1))
    end = start + span_len - 1

    seg = sorted(r.perf_index for r in alignment
                 if r.op == MATCH and start <= r.score_note.bar_index <= end and r.perf_index >= 0)
    new_score = replace(score, repeats=[RepeatMark("forward", start), RepeatMark("backward", end)], warnings=[])
    if not seg:
        return new_score, list(perf), {"span": [start, end], "shift_s": 0.0, "copied": [], "new_index": list(
            range(len(perf))), "copy_index": {}}
    onsets = sorted({p.onset_s for p in perf})
    mean_ioi = float(np.mean(np.diff(onsets))) if len(onsets) > 1 else 0.5
    seg_set = set(seg)
    t_start = min(perf[i].onset_s for i in seg)
    last_onset = max(perf[i].onset_s for i in seg)
    last_off = max(perf[i].offset_s for i in seg)
    shift = last_off + mean_ioi - t_start

    items = []
    for i, p in enumerate(perf):
        if i not in seg_set and p.onset_s > last_onset:
            items.append((replace(p, onset_s=p.onset_s + shift), ("orig", i)))
        else:
            items.append((p, ("orig", i)))
    for i in seg:
        items.append((replace(perf[i], onset_s=perf[i].onset_s + shift), ("copy", i)))
    items.sort(key=lambda it: perf_sort_key(it[0]))
    new_index, copy_index = [0] * len(perf), {}
    for k, (_, (tag, i)) in enumerate(items):
        if tag == "orig":
            new_index[i] = k
        else:
            copy_index[i] = k
    provenance = {"span": [start, end], "t_start": t_start, "shift_s": shift, "copied": seg,
                  "new_index": new_index, "copy_index": copy_index, "seed": seed}
    return new_score, [it[0] for it in items], provenance


# ---- ground truth from logs ------------------------------------------------

def _orig_pairs_by_score(pairs):
    return {j: i for i, j in pairs}


def score_modulation_truth(orig_unfolded, new_score: ScoreIR, perf, pairs, log):
    """Ground-truth records for (modulated score, unmodified performance)."""
    new_unfolded = unfold_repeats(new_score)
    perf_of = _orig_pairs_by_score(pairs)
    orig_index = {}
    for j, n in enumerate(orig_unfolded.notes):
        orig_index[(n.bar_index, n.pos_ticks, n.voice, n.pitch)] = j
    shifted = {(e["bar"], e["pos"], e["voice"], e["new_pitch"]): e["pitch"] for e in log["edits"] if e["op"] == "shift"}
    new_pairs = []
    for j, n in enumerate(new_unfolded.notes):
        src = new_unfolded.source_bar(n.bar_index)
        if (src, n.pos_ticks, n.voice, n.pitch) in shifted:
            continue
        oj = orig_index.get((n.bar_index, n.pos_ticks, n.voice, n.pitch))
        if oj is not None and oj in perf_of:
            new_pairs.append((perf_of[oj], j))
    return records_from_pairs(sorted(new_pairs), perf, new_unfolded), new_unfolded


def performance_modulation_truth(unfolded, new_perf, pairs, log):
    """Ground-truth records for (score, modulated performance)."""
    score_of = dict(pairs)
    new_pairs = [(k, score_of[o]) for k, o in enumerate(log["origin"]) if o >= 0 and o in score_of]
    return records_from_pairs(sorted(new_pairs), new_perf, unfolded)


def repeat_truth(new_score: ScoreIR, new_perf, provenance, orig_unfolded, pairs):
    """Ground-truth records for a repeat-simulated (score, performance) pair."""
    new_unfolded = unfold_repeats(new_score)
    perf_of = _orig_pairs_by_score(pairs)
    orig_index = {(n.bar_index, n.pos_ticks, n.voice, n.pitch): j for j, n in enumerate(orig_unfolded.notes)}
    new_pairs = []
    for j, n in enumerate(new_unfolded.notes):
        ref = new_unfolded.bars[n.bar_index]
        oj = orig_index.get((ref.source_index, n.pos_ticks, n.voice, n.pitch))
        if oj is None or oj not in perf_of:
            continue
        pi = perf_of[oj]
        if ref.pass_number == 1:
            new_pairs.append((provenance["new_index"][pi], j))
        elif pi in provenance["copy_index"]:
            new_pairs.append((provenance["copy_index"][pi], j))
    return records_from_pairs(sorted(new_pairs), new_perf, new_unfolded), new_unfolded
