"""Small hand-checked metric fixtures, shared by the unit and acceptance tests.

Expected values were worked out on paper; the arithmetic is in the comments.
"""
from perfalign.perf_ir import PerfNote
from perfalign.score_ir import ScoreNote
from perfalign.tokenizer import AlignRecord


def _p(k, pitch=60, vel=64):
    return PerfNote(0.5 * k, 0.4, pitch, vel)


def _s(k, pitch=60, bar=0):
    return ScoreNote(bar, 160 * k, pitch, 160)


def mixed_records():
    """3 matches, 1 extra, 2 missed."""
    return [
        AlignRecord("match", _p(0, 60), _s(0, 60), 1),
        AlignRecord("delete", None, _s(1, 62), 1),
        AlignRecord("match", _p(1, 64), _s(2, 64), 1),
        AlignRecord("insert", _p(2, 66)),
        AlignRecord("match", _p(3, 67), _s(3, 67), 1),
        AlignRecord("delete", None, _s(4, 69), 1),
    ]


def ten_matches():
    return [AlignRecord("match", _p(k, 60 + k), _s(k, 60 + k), 1) for k in range(10)]


def ten_with_flip(k=4):
    """Match k replaced by an Insert of its performed note and a Delete of its score note.

    TP 9, FP 2, FN 1: P = 9/11, R = 9/10, F = 18/21, Acc = 9/12.
    """
    recs = ten_matches()
    m = recs[k]
    return recs[:k] + [AlignRecord("insert", m.perf_note), AlignRecord("delete", None, m.score_note, 1)] + recs[k + 1:]


FLIP_EXPECTED = {"tp": 9, "fp": 2, "fn": 1, "precision": 9 / 11, "recall": 9 / 10, "f1": 18 / 21,
                 "accuracy": 9 / 12}

# Three reference notes with velocities 40 / 80 / 120; the estimate plays the
# last at 100. Refs rescaled to [0, 0.5, 1]; least squares on x = [40, 80, 100]
# gives slope 9/560 and intercept -19/28, so fitted = [-1/28, 17/28, 26/28].
# Errors 1/28, 3/28, 2/28: only the middle pair exceeds 0.1.
# F_on = 1, F_off_vel = 2/3, MAE = 20/3.
VEL_REF = [PerfNote(0.0, 0.5, 60, 40), PerfNote(0.5, 0.5, 64, 80), PerfNote(1.0, 0.5, 67, 120)]
VEL_EST = [PerfNote(0.0, 0.5, 60, 40), PerfNote(0.5, 0.5, 64, 80), PerfNote(1.0, 0.5, 67, 100)]
VEL_EXPECTED = {"f_on": 1.0, "f_off_vel": 2 / 3, "ov_tp": 2, "mae": 20 / 3}

# Offsets: ref durations 0.5 -> tolerance max(0.05, 0.1) = 0.1 s. The estimate
# holds the second note 0.15 s longer, so only two notes pass the offset test.
OFF_REF = [PerfNote(0.0, 0.5, 60, 50), PerfNote(0.5, 0.5, 62, 50), PerfNote(1.0, 0.5, 64, 50)]
OFF_EST = [PerfNote(0.02, 0.5, 60, 50), PerfNote(0.5, 0.65, 62, 50), PerfNote(0.96, 0.5, 64, 50)]
OFF_EXPECTED = {"f_on": 1.0, "ov_tp": 2, "f_off_vel": 2 / 3, "mae": 0.0}
