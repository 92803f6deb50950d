"""Mistake detection and evaluation metrics.

Accuracy is reported as TP / (TP + FP + FN), the convention of the
score-informed mistake-detection literature. When both prediction and
reference are empty, precision, recall, F and accuracy are all 1.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import MetricInputError
from .tokenizer.records import DELETE, INSERT, MATCH, score_key

ONSET_TOLERANCE = 0.05
OFFSET_RATIO = 0.2
OFFSET_MIN_TOLERANCE = 0.05
VELOCITY_TOLERANCE = 0.1
ACCURACY_FORMULA = "TP / (TP + FP + FN)"


@dataclass(frozen=True)
class MetricResult:
    precision: float
    recall: float
    f1: float
    accuracy: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "MetricResult":
        if tp + fp + fn == 0:
            return cls(1.0, 1.0, 1.0, 1.0, 0, 0, 0)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f, tp / (tp + fp + fn), tp, fp, fn)

    def to_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1, "accuracy": self.accuracy,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


@dataclass
class MistakeReport:
    correct: list = field(default_factory=list)  # (PerfNote, ScoreNote, pass)
    extra: list = field(default_factory=list)    # PerfNote
    missed: list = field(default_factory=list)   # (ScoreNote, pass)

    def counts(self):
        return len(self.correct), len(self.extra), len(self.missed)

    def to_dict(self):
        return {
            "correct": [{"perf": p.to_dict(), "score": s.to_dict(), "pass": k} for p, s, k in self.correct],
            "extra": [p.to_dict() for p in self.extra],
            "missed": [{"score": s.to_dict(), "pass": k} for s, k in self.missed],
        }


def derive_mistakes(records) -> MistakeReport:
    report = MistakeReport()
    for r in records:
        if r.op == MATCH:
            report.correct.append((r.perf_note, r.score_note, r.score_pass))
        elif r.op == INSERT:
            report.extra.append(r.perf_note)
        elif r.op == DELETE:
            report.missed.append((r.score_note, r.score_pass))
    return report


def max_matching(compatible: np.ndarray) -> int:
    """Size of a maximum bipartite matching for a boolean [n_left, n_right] matrix."""
    if compatible.size == 0 or not compatible.any():
        return 0
    return int((maximum_bipartite_matching(csr_matrix(compatible.astype(np.int8)), perm_type="column") >= 0).sum())


def _matching_pairs(compatible: np.ndarray) -> list[tuple[int, int]]:
    if compatible.size == 0 or not compatible.any():
        return []
    match = maximum_bipartite_matching(csr_matrix(compatible.astype(np.int8)), perm_type="column")
    return [(i, int(j)) for i, j in enumerate(match) if j >= 0]


def _perf_compat(a, b, tol: float) -> np.ndarray:
    if not a or not b:
        return np.zeros((len(a), len(b)), dtype=bool)
    on_a = np.array([n.onset_s for n in a])
    on_b = np.array([n.onset_s for n in b])
    pa = np.array([n.pitch for n in a])
    pb = np.array([n.pitch for n in b])
    return (np.abs(on_a[:, None] - on_b[None, :]) <= tol + 1e-9) & (pa[:, None] == pb[None, :])


def _record_key(r):
    score = score_key(r.score_note, r.score_pass) if r.score_note is not None else None
    return r.op, score


def _universe(records):
    perf = sorted((r.perf_note.pitch, r.perf_note.onset_s) for r in records if r.perf_note is not None)
    score = Counter(score_key(r.score_note, r.score_pass) for r in records if r.score_note is not None)
    return perf, score


def f_align(pred, truth, onset_tol: float = 1e-6, strict: bool = True) -> MetricResult:
    """Record-level F: a predicted record is a true positive when a truth record
    has the same op, the same score note (bar, position, pitch, pass) and a
    performed note of the same pitch within ``onset_tol``. Repeat passes of a
    note are distinct identities."""
    if strict:
        pu, su = _universe(pred)
        tu, tsu = _universe(truth)
        same_perf = len(pu) == len(tu) and all(
            a[0] == b[0] and abs(a[1] - b[1]) <= onset_tol + 1e-9 for a, b in zip(pu, tu))
        if not same_perf or su != tsu:
            raise MetricInputError("prediction and truth reference different note universes")
    n, m = len(pred), len(truth)
    compat = np.zeros((n, m), dtype=bool)
    truth_by_key: dict = {}
    for j, t in enumerate(truth):
        truth_by_key.setdefault(_record_key(t), []).append(j)
    for i, p in enumerate(pred):
        for j in truth_by_key.get(_record_key(p), []):
            t = truth[j]
            if p.perf_note is None:
                compat[i, j] = True
            elif p.perf_note.pitch == t.perf_note.pitch and abs(p.perf_note.onset_s - t.perf_note.onset_s) <= onset_tol + 1e-9:
                compat[i, j] = True
    tp = max_matching(compat)
    return MetricResult.from_counts(tp, n - tp, m - tp)


class TranscriptionResult(NamedTuple):
    onset: MetricResult
    offset_velocity: MetricResult
    mae_velocity: float


def transcription_f1(est, ref, onset_tol: float = ONSET_TOLERANCE) -> TranscriptionResult:
    """Onset F, onset+offset+velocity F, and velocity MAE over onset matches.

    The velocity criterion rescales reference velocities to [0, 1], fits the
    matched estimated velocities to them by least squares (slope and
    intercept), and accepts a pair when the fitted value is within 0.1.
    """
    if not est and not ref:
        perfect = MetricResult.from_counts(0, 0, 0)
        return TranscriptionResult(perfect, perfect, 0.0)
    onset_ok = _perf_compat(ref, est, onset_tol)
    onset_pairs = _matching_pairs(onset_ok)
    on_tp = len(onset_pairs)
    onset = MetricResult.from_counts(on_tp, len(est) - on_tp, len(ref) - on_tp)
    if onset_pairs:
        mae = float(np.mean([abs(est[j].velocity - ref[i].velocity) for i, j in onset_pairs]))
    else:
        mae = math.nan

    if not ref or not est:
        return TranscriptionResult(onset, MetricResult.from_counts(0, len(est), len(ref)), mae)
    ref_off = np.array([n.offset_s for n in ref])
    est_off = np.array([n.offset_s for n in est])
    ref_dur = np.array([n.dur_s for n in ref])
    off_tol = np.maximum(OFFSET_MIN_TOLERANCE, OFFSET_RATIO * ref_dur)
    offset_ok = onset_ok & (np.abs(ref_off[:, None] - est_off[None, :]) <= off_tol[:, None] + 1e-9)

    ref_vel = np.array([n.velocity for n in ref], dtype=float)
    ref_vel = ref_vel - ref_vel.min()
    if ref_vel.max() > 0:
        ref_vel = ref_vel / ref_vel.max()
    est_vel = np.array([n.velocity for n in est], dtype=float)
    first = _matching_pairs(offset_ok)
    if first:
        ri = np.array([i for i, _ in first])
        ej = np.array([j for _, j in first])
        design = np.stack([est_vel[ej], np.ones(len(ej))], axis=1)
        (slope, intercept), *_ = np.linalg.lstsq(design, ref_vel[ri], rcond=None)
        fitted = slope * est_vel + intercept
        vel_ok = np.abs(fitted[None, :] - ref_vel[:, None]) <= VELOCITY_TOLERANCE + 1e-9
        ov_tp = max_matching(offset_ok & vel_ok)
    else:
        ov_tp = 0
    off_vel = MetricResult.from_counts(ov_tp, len(est) - ov_tp, len(ref) - ov_tp)
    return TranscriptionResult(onset, off_vel, mae)


def mistake_metrics(pred: MistakeReport, truth: MistakeReport, onset_tol: float = ONSET_TOLERANCE) -> dict:
    """Per-class MetricResults for correct / extra / missed notes.

    Performed notes are identified by pitch and onset within ``onset_tol``;
    score notes by (bar, position, pitch, pass).
    """
    # correct pairs: both sides must agree
    compat = np.zeros((len(pred.correct), len(truth.correct)), dtype=bool)
    for i, (pp, ps, pk) in enumerate(pred.correct):
        for j, (tp_, ts, tk) in enumerate(truth.correct):
            compat[i, j] = (score_key(ps, pk) == score_key(ts, tk) and pp.pitch == tp_.pitch
                            and abs(pp.onset_s - tp_.onset_s) <= onset_tol + 1e-9)
    tp = max_matching(compat)
    correct = MetricResult.from_counts(tp, len(pred.correct) - tp, len(truth.correct) - tp)

    tp = max_matching(_perf_compat(pred.extra, truth.extra, onset_tol))
    extra = MetricResult.from_counts(tp, len(pred.extra) - tp, len(truth.extra) - tp)

    pk = Counter(score_key(s, k) for s, k in pred.missed)
    tk = Counter(score_key(s, k) for s, k in truth.missed)
    tp = sum((pk & tk).values())
    missed = MetricResult.from_counts(tp, len(pred.missed) - tp, len(truth.missed) - tp)
    return {"correct": correct, "extra": extra, "missed": missed}


def metrics_report(blocks: dict, aggregate=None) -> dict:
    """JSON-ready report; ``blocks`` maps file name -> {metric name: MetricResult | float}."""
    def dump(v):
        if isinstance(v, MetricResult):
            return v.to_dict()
        if isinstance(v, float) and math.isnan(v):
            return None
        return v

    out = {"accuracy_formula": ACCURACY_FORMULA,
           "files": {name: {k: dump(v) for k, v in metrics.items()} for name, metrics in blocks.items()}}
    if aggregate is not None:
        out["aggregate"] = {k: dump(v) for k, v in aggregate.items()}
    return out


def aggregate_counts(results) -> MetricResult:
    """Micro-average: sums TP/FP/FN over per-file results."""
    tp = sum(r.tp for r in results)
    fp = sum(r.fp for r in results)
    fn = sum(r.fn for r in results)
    return MetricResult.from_counts(tp, fp, fn)
