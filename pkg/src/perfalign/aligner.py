"""Note-level score-to-performance alignment.

Global edit alignment over the unfolded score and the performance, both in
their canonical orders. Matching requires equal pitch and costs the
tempo-normalized onset deviation between the performed note and the score
note mapped into performance time; an extra or missing note costs the gap
penalty. The score->time map starts as a proportional fit and is refit
piecewise-linearly through the matches, twice.

Costs are kept as integers (micro-units) so the dynamic program and the
exhaustive oracle agree exactly. Among equal-cost alignments the op sequence
that is smallest when read front to back under Match < Insert < Delete wins.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AlignmentSizeError, ParseError
from .perf_ir import PerfNote
from .score_ir import ScoreIR, ScoreNote, UnfoldedScore
from .tokenizer.records import DELETE, INSERT, MATCH, AlignRecord

COST_UNIT = 1_000_000
IOI_FLOOR = 0.05
DEFAULT_SEC_PER_TICK = 0.5 / 320  # 120 bpm
BRUTE_FORCE_LIMIT = 12
INF = np.iinfo(np.int64).max // 4


@dataclass(frozen=True)
class AlignParams:
    gap_penalty: float = 1.0
    refits: int = 2
    ioi_floor: float = IOI_FLOOR
    max_match_cost: float = 1e6  # caps a single match cost before integer conversion
    pitch_init: bool = True  # also try a time map seeded by a pitch-only alignment


def _local_ioi(onsets: np.ndarray, floor: float) -> np.ndarray:
    """Per-note local inter-onset interval over distinct onsets (floored)."""
    if len(onsets) == 0:
        return np.zeros(0)
    distinct = np.unique(onsets)
    if len(distinct) == 1:
        return np.full(len(onsets), floor)
    idx = np.searchsorted(distinct, onsets)
    prev_gap = np.where(idx > 0, distinct[np.maximum(idx - 1, 0)], np.nan)
    next_gap = np.where(idx < len(distinct) - 1, distinct[np.minimum(idx + 1, len(distinct) - 1)], np.nan)
    before = onsets - prev_gap
    after = next_gap - onsets
    both = np.where(np.isnan(before), after, np.where(np.isnan(after), before, (before + after) / 2))
    return np.maximum(both, floor)


class TimeMap:
    """Monotone score-tick -> seconds map."""

    def __init__(self, ticks, seconds, slope):
        self.ticks = np.asarray(ticks, dtype=float)
        self.seconds = np.asarray(seconds, dtype=float)
        self.slope = slope

    def __call__(self, tick):
        tick = np.asarray(tick, dtype=float)
        if len(self.ticks) == 1:
            return self.seconds[0] + (tick - self.ticks[0]) * self.slope
        out = np.interp(tick, self.ticks, self.seconds)
        lo = tick < self.ticks[0]
        hi = tick > self.ticks[-1]
        out = np.where(lo, self.seconds[0] + (tick - self.ticks[0]) * self.slope, out)
        out = np.where(hi, self.seconds[-1] + (tick - self.ticks[-1]) * self.slope, out)
        return out


def initial_map(score_ticks: np.ndarray, perf_onsets: np.ndarray) -> TimeMap:
    if len(score_ticks) == 0 or len(perf_onsets) == 0:
        return TimeMap([0.0], [0.0], DEFAULT_SEC_PER_TICK)
    s0, s1 = float(score_ticks.min()), float(score_ticks.max())
    p0, p1 = float(perf_onsets.min()), float(perf_onsets.max())
    slope = (p1 - p0) / (s1 - s0) if s1 > s0 and p1 > p0 else DEFAULT_SEC_PER_TICK
    return TimeMap([s0], [p0], slope)


def refit_map(pairs, score_ticks, perf_onsets, previous: TimeMap) -> TimeMap:
    if not pairs:
        return previous
    grouped: dict[float, list[float]] = {}
    for i, j in pairs:
        grouped.setdefault(float(score_ticks[j]), []).append(float(perf_onsets[i]))
    ticks = sorted(grouped)
    secs = [float(np.mean(grouped[t])) for t in ticks]
    # keep the map non-decreasing
    secs = list(np.maximum.accumulate(secs))
    if len(ticks) >= 2 and secs[-1] > secs[0]:
        slope = (secs[-1] - secs[0]) / (ticks[-1] - ticks[0])
    else:
        slope = previous.slope
    return TimeMap(ticks, secs, slope)


def cost_matrix(perf_pitch, perf_onsets, score_pitch, score_ticks, tmap: TimeMap, params: AlignParams):
    """Integer match costs [n_perf, n_score]; INF where pitches differ."""
    n, m = len(perf_onsets), len(score_ticks)
    if n == 0 or m == 0:
        return np.zeros((n, m), dtype=np.int64)
    ioi = _local_ioi(perf_onsets, params.ioi_floor)
    mapped = tmap(score_ticks)
    dev = np.abs(perf_onsets[:, None] - mapped[None, :]) / ioi[:, None]
    dev = np.minimum(dev, params.max_match_cost)
    cost = np.rint(dev * COST_UNIT).astype(np.int64)
    cost[perf_pitch[:, None] != score_pitch[None, :]] = INF
    return cost


def gap_cost(params: AlignParams) -> int:
    return int(round(params.gap_penalty * COST_UNIT))


def solve_dp(cost: np.ndarray, gap: int) -> tuple[int, list[str]]:
    """Minimum-cost monotone alignment; returns (cost, ops) with the front-to-back tie-break."""
    n, m = cost.shape
    suffix = np.empty((n + 1, m + 1), dtype=np.int64)
    suffix[n, :] = gap * (m - np.arange(m + 1))
    k = np.arange(m + 1)
    for i in range(n - 1, -1, -1):
        below = suffix[i + 1]
        cand = np.empty(m + 1, dtype=np.int64)
        cand[m] = below[m] + gap
        diag = np.where(cost[i] >= INF, INF, cost[i] + below[1:])
        cand[:m] = np.minimum(diag, below[:m] + gap)
        # S[i][j] = min_{k>=j} cand[k] + gap*(k-j): suffix minimum of cand[k] + gap*k
        shifted = cand + gap * k
        suffix[i] = np.minimum.accumulate(shifted[::-1])[::-1] - gap * k
    ops = []
    i = j = 0
    while i < n or j < m:
        here = suffix[i, j]
        if i < n and j < m and cost[i, j] < INF and cost[i, j] + suffix[i + 1, j + 1] == here:
            ops.append(MATCH)
            i, j = i + 1, j + 1
        elif i < n and gap + suffix[i + 1, j] == here:
            ops.append(INSERT)
            i += 1
        else:
            ops.append(DELETE)
            j += 1
    return int(suffix[0, 0]), ops


def solve_bruteforce(cost: np.ndarray, gap: int) -> tuple[int, list[str]]:
    """Enumerate every monotone alignment; keep the cheapest, ties to the smallest op string."""
    n, m = cost.shape
    rank = {MATCH: "0", INSERT: "1", DELETE: "2"}
    best = [None, None, None]  # cost, key, ops

    def walk(i, j, acc, ops):
        if i == n and j == m:
            key = "".join(rank[o] for o in ops)
            if best[0] is None or acc < best[0] or (acc == best[0] and key < best[1]):
                best[:] = [acc, key, list(ops)]
            return
        if i < n and j < m and cost[i, j] < INF:
            ops.append(MATCH)
            walk(i + 1, j + 1, acc + int(cost[i, j]), ops)
            ops.pop()
        if i < n:
            ops.append(INSERT)
            walk(i + 1, j, acc + gap, ops)
            ops.pop()
        if j < m:
            ops.append(DELETE)
            walk(i, j + 1, acc + gap, ops)
            ops.pop()

    walk(0, 0, 0, [])
    return best[0], best[2]


def _pairs(ops):
    pairs, i, j = [], 0, 0
    for op in ops:
        if op == MATCH:
            pairs.append((i, j))
            i, j = i + 1, j + 1
        elif op == INSERT:
            i += 1
        else:
            j += 1
    return pairs


def records_from_ops(ops, perf, score: UnfoldedScore) -> list[AlignRecord]:
    sources = score.source_notes()
    records, i, j = [], 0, 0
    for op in ops:
        if op == MATCH:
            note, p = sources[j]
            records.append(AlignRecord(MATCH, perf[i], note, p, i, j))
            i, j = i + 1, j + 1
        elif op == INSERT:
            records.append(AlignRecord(INSERT, perf[i], None, 0, i, -1))
            i += 1
        else:
            note, p = sources[j]
            records.append(AlignRecord(DELETE, None, note, p, -1, j))
            j += 1
    return records


def records_from_pairs(pairs, perf, score: UnfoldedScore) -> list[AlignRecord]:
    """Canonical record order for a known monotone pairing (used for ground truth)."""
    matched = dict(pairs)
    matched_scores = set(matched.values())
    ops, i, j = [], 0, 0
    n, m = len(perf), len(score.notes)
    while i < n or j < m:
        if i < n and j < m and matched.get(i) == j:
            ops.append(MATCH)
            i, j = i + 1, j + 1
        elif i < n and i not in matched:
            ops.append(INSERT)
            i += 1
        elif j < m and j not in matched_scores:
            ops.append(DELETE)
            j += 1
        else:
            raise ValueError("pairing is not monotone")
    return records_from_ops(ops, perf, score)


def _refine(tmap, perf_pitch, perf_onsets, score_pitch, score_ticks, params, solver):
    gap = gap_cost(params)
    cost = cost_matrix(perf_pitch, perf_onsets, score_pitch, score_ticks, tmap, params)
    total, ops = solver(cost, gap)
    for _ in range(params.refits):
        tmap = refit_map(_pairs(ops), score_ticks, perf_onsets, tmap)
        cost = cost_matrix(perf_pitch, perf_onsets, score_pitch, score_ticks, tmap, params)
        total, ops = solver(cost, gap)
    return total, ops


def _run(score: UnfoldedScore, perf, params: AlignParams, solver):
    """Refine from a proportional map and, with ``pitch_init``, also from a map
    anchored by a timing-free pitch alignment; keep the cheaper result (the
    first on ties)."""
    perf_onsets = np.array([p.onset_s for p in perf], dtype=float)
    perf_pitch = np.array([p.pitch for p in perf], dtype=int)
    score_ticks = np.array(score.note_ticks(), dtype=float)
    score_pitch = np.array([n.pitch for n in score.notes], dtype=int)
    base = initial_map(score_ticks, perf_onsets)
    best = _refine(base, perf_pitch, perf_onsets, score_pitch, score_ticks, params, solver)
    if params.pitch_init and len(perf) and len(score_ticks):
        lcs = np.where(perf_pitch[:, None] == score_pitch[None, :], 0, INF).astype(np.int64)
        _, ops = solver(lcs, COST_UNIT)
        anchored = refit_map(_pairs(ops), score_ticks, perf_onsets, base)
        other = _refine(anchored, perf_pitch, perf_onsets, score_pitch, score_ticks, params, solver)
        if other[0] < best[0]:
            best = other
    return best


def align_notes(score: UnfoldedScore, perf, params: Optional[AlignParams] = None) -> list[AlignRecord]:
    params = params or AlignParams()
    _, ops = _run(score, perf, params, solve_dp)
    return records_from_ops(ops, perf, score)


def align_cost(score: UnfoldedScore, perf, params: Optional[AlignParams] = None, solver=solve_dp) -> int:
    """Final-iteration alignment cost in integer cost units."""
    return _run(score, perf, params or AlignParams(), solver)[0]


def align_bruteforce(score: UnfoldedScore, perf, params: Optional[AlignParams] = None) -> list[AlignRecord]:
    if len(score.notes) + len(perf) > BRUTE_FORCE_LIMIT:
        raise AlignmentSizeError(
            f"{len(score.notes)} score + {len(perf)} performance notes exceeds the brute-force bound {BRUTE_FORCE_LIMIT}")
    params = params or AlignParams()
    _, ops = _run(score, perf, params, solve_bruteforce)
    return records_from_ops(ops, perf, score)


def select_score_window(score: ScoreIR, segment: tuple[float, float], prior_alignment=None,
                        perf_duration: Optional[float] = None, max_bars: int = 50, margin: int = 2):
    """Contiguous source-bar range [start, stop) covering a performed segment.

    With a prior alignment, the bars of matched notes whose onsets fall in
    the segment, widened by ``margin`` bars. Otherwise the segment's relative
    position in the performance is mapped proportionally onto the bars.
    """
    t0, t1 = segment
    n = score.bar_count
    if n <= max_bars:
        return 0, n
    lo = hi = None
    if prior_alignment:
        bars = [r.score_note.bar_index for r in prior_alignment
                if r.op == MATCH and t0 <= r.perf_note.onset_s <= t1]
        if bars:
            lo, hi = min(bars) - margin, max(bars) + margin + 1
    if lo is None:
        total = perf_duration if perf_duration else t1
        if total <= 0:
            return 0, max_bars
        lo = int(np.floor(t0 / total * n)) - margin
        hi = int(np.ceil(t1 / total * n)) + margin
    lo, hi = max(0, lo), min(n, hi)
    if hi - lo > max_bars:
        center = (lo + hi) // 2
        lo = max(0, center - max_bars // 2)
        hi = lo + max_bars
    return lo, hi


# ---- match TSV -----------------------------------------------------------

TSV_COLUMNS = ("perf_index", "score_linear_index", "op", "repeat_flag", "perf_onset_s", "score_bar",
               "score_pos_ticks")
TSV_EXTRA = ("perf_dur_s", "perf_pitch", "perf_velocity", "score_pitch", "score_dur_ticks", "score_pass")


def write_match_tsv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(TSV_COLUMNS + TSV_EXTRA)
    for r in records:
        p, s = r.perf_note, r.score_note
        w.writerow([
            r.perf_index if p is not None else -1,
            r.score_index if s is not None else -1,
            r.op,
            int(r.repeat_flag),
            repr(p.onset_s) if p else -1,
            s.bar_index if s else -1,
            s.pos_ticks if s else -1,
            repr(p.dur_s) if p else -1,
            p.pitch if p else -1,
            p.velocity if p else -1,
            s.pitch if s else -1,
            s.dur_ticks if s else -1,
            r.score_pass,
        ])
    return buf.getvalue()


def read_match_tsv(text: str) -> list[AlignRecord]:
    numbered = [(k, line) for k, line in enumerate(text.splitlines(), start=1) if not line.startswith("#")]
    rows = list(zip((k for k, _ in numbered), csv.reader((line for _, line in numbered), delimiter="\t")))
    if not rows or tuple(rows[0][1][:len(TSV_COLUMNS)]) != TSV_COLUMNS:
        raise ParseError("match TSV header missing or wrong")
    header = rows[0][1]
    records = []
    for lineno, row in rows[1:]:
        if not row:
            continue
        d = dict(zip(header, row))
        try:
            op = d["op"]
            perf = None
            if op in (MATCH, INSERT):
                perf = PerfNote(float(d["perf_onset_s"]), float(d["perf_dur_s"]), int(d["perf_pitch"]),
                                int(d["perf_velocity"]))
            note = None
            score_pass = 0
            if op in (MATCH, DELETE):
                note = ScoreNote(int(d["score_bar"]), int(d["score_pos_ticks"]), int(d["score_pitch"]),
                                 int(d["score_dur_ticks"]))
                score_pass = int(d.get("score_pass") or (2 if d["repeat_flag"] == "1" else 1))
            records.append(AlignRecord(op, perf, note, score_pass, int(d["perf_index"]),
                                       int(d["score_linear_index"])).validate())
        except (KeyError, ValueError) as exc:
            raise ParseError(f"match TSV line {lineno}: {exc}") from None
    return records
