"""AlignRecord sequences <-> TriStep sequences."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import DecodeError, EncodeError, ValidationError
from ..perf_ir import PerfNote
from ..score_ir import ScoreNote
from . import quantize as q
from .records import DELETE, INSERT, MATCH, AlignRecord
from .vocab import (
    BOS,
    EOS,
    EXCLUSIVE_FIELDS,
    FIELDS,
    GLOBAL_BOS,
    GLOBAL_EOS,
    GLOBAL_NONE,
    MICRO_ZERO,
    NOTE_FIELDS,
    OPS,
    PERF,
    SCORE,
    ALIGN,
    TIME_SIGNATURES,
    TriStep,
    timesig_id,
)

MAX_BARS = 50
MIN_PERF_DUR = 1e-3  # duration token 0 decodes to this so notes stay well-formed

_SILENCE = {f.name: f.silence_id for f in FIELDS}


def _perf_fields(note: PerfNote, origin: float) -> dict:
    _, t_tok, micro = q.quantize_onset(note.onset_s, origin)
    return {
        "perf__t": t_tok,
        "perf__t_micro": micro + MICRO_ZERO,
        "perf__vel": q.quantize_velocity(note.velocity) - 1,
        "perf__dur": q.quantize_duration_perf(note.dur_s),
        "perf__pitch": note.pitch - 21,
    }


def _score_fields(note: ScoreNote, bar_offset: int) -> dict:
    rel = note.bar_index - bar_offset
    if not 0 <= rel < MAX_BARS:
        raise EncodeError(f"bar {note.bar_index} outside the {MAX_BARS}-bar window starting at {bar_offset}")
    pos_tok, micro = q.quantize_score_position(note.pos_ticks, bar=note.bar_index)
    return {
        "score__bar": rel,
        "score__pos": pos_tok,
        "score__pos_micro": micro + MICRO_ZERO,
        "score__dur": q.quantize_duration_score(note.dur_ticks),
        "score__pitch": note.pitch - 21,
    }


def _timesig_step(num: int, den: int) -> TriStep:
    try:
        sid = timesig_id(num, den)
    except ValueError:
        raise EncodeError(f"time signature {num}/{den} not in vocabulary") from None
    return TriStep.build(score__timesig=sid, align__skip=1)


RESET_STEP = TriStep.build(perf__reset=1, align__skip=1)


def encode(records, timesig_events=(), window_origin: float = 0.0, bar_offset: int = 0) -> list[TriStep]:
    """Encode aligned records into BOS + steps + EOS.

    ``timesig_events`` are (bar, numerator, denominator); each is emitted as an
    exclusive score step just before the first record whose score bar reaches
    it (remaining ones before EOS).
    """
    steps = [BOS]
    origin = window_origin
    pending = sorted(timesig_events)
    ts_i = 0
    for k, rec in enumerate(records):
        try:
            rec.validate()
        except ValidationError as exc:
            raise EncodeError(f"record {k}: {exc}") from None
        if rec.score_note is not None:
            while ts_i < len(pending) and pending[ts_i][0] <= rec.score_note.bar_index:
                steps.append(_timesig_step(*pending[ts_i][1:]))
                ts_i += 1
        fields = {}
        if rec.perf_note is not None:
            if rec.perf_note.onset_s < origin - 1e-9:
                raise EncodeError(f"record {k}: onset {rec.perf_note.onset_s} precedes the current 2 s window")
            resets, _, _ = q.quantize_onset(rec.perf_note.onset_s, origin)
            steps.extend([RESET_STEP] * resets)
            origin += resets * q.RESET_PERIOD
            fields.update(_perf_fields(rec.perf_note, origin))
        else:
            fields["perf__skip"] = 1
        if rec.score_note is not None:
            fields.update(_score_fields(rec.score_note, bar_offset))
        else:
            fields["score__skip"] = 1
        fields["align__op"] = OPS.index(rec.op)
        fields["align__repeat"] = int(rec.repeat_flag)
        steps.append(TriStep.build(**fields))
    for _, num, den in pending[ts_i:]:
        steps.append(_timesig_step(num, den))
    steps.append(EOS)
    return steps


@dataclass
class Decoded:
    perf_notes: list = field(default_factory=list)
    score_notes: list = field(default_factory=list)  # (ScoreNote, pass_number)
    records: list = field(default_factory=list)
    time_sigs: list = field(default_factory=list)    # (step index, numerator, denominator)

    def __iter__(self):
        # unpacks as (perf_notes, score_refs, records)
        return iter((self.perf_notes, self.score_notes, self.records))


def channel_state(step: TriStep, channel: str, index: int) -> str:
    """'note', 'silent', or the short name of the active exclusive field.

    Raises DecodeError on a partially silenced channel or competing
    exclusive tokens.
    """
    active = [name for name in EXCLUSIVE_FIELDS[channel] if step[name] != _SILENCE[name]]
    note_fields = NOTE_FIELDS[channel]
    silenced = [step[name] == _SILENCE[name] for name in note_fields]
    if len(active) > 1:
        raise DecodeError(f"{channel} channel has competing exclusive tokens {active}", index)
    if channel == ALIGN and step["align.repeat"] and not any(not s for s in silenced):
        raise DecodeError("repeat flag set without an alignment op", index)
    if active:
        if not all(silenced):
            raise DecodeError(f"{channel} exclusive token {active[0]} with unsilenced fields", index)
        return active[0].split(".", 1)[1]
    if all(silenced):
        return "silent"
    if any(silenced):
        missing = [n for n, s in zip(note_fields, silenced) if s]
        raise DecodeError(f"{channel} channel partially silenced ({', '.join(missing)})", index)
    return "note"


def check_step(step: TriStep, index: int = 0) -> tuple[str, str, str]:
    """Validate the exclusive/silence invariant; returns the three channel states."""
    for i, f in enumerate(FIELDS):
        if not 0 <= step.ids[i] < f.size:
            raise DecodeError(f"{f.name} id {step.ids[i]} out of range", index)
    states = tuple(channel_state(step, c, index) for c in (PERF, SCORE, ALIGN))
    marker = step["global.marker"]
    if marker != GLOBAL_NONE and states != ("silent", "silent", "silent"):
        raise DecodeError("BOS/EOS step with active channels", index)
    return states


def decode(steps, window_origin: float = 0.0, bar_offset: int = 0, require_eos: bool = True) -> Decoded:
    out = Decoded()
    if not steps or steps[0]["global.marker"] != GLOBAL_BOS:
        raise DecodeError("sequence does not start with BOS", 0)
    check_step(steps[0], 0)
    origin = window_origin
    ended = False
    for idx in range(1, len(steps)):
        step = steps[idx]
        perf, score, align = check_step(step, idx)
        marker = step["global.marker"]
        if marker == GLOBAL_EOS:
            ended = True
            break
        if marker == GLOBAL_BOS:
            raise DecodeError("BOS inside sequence", idx)
        if (perf, score, align) == ("reset", "silent", "skip"):
            origin += q.RESET_PERIOD
            continue
        if (perf, score, align) == ("silent", "timesig", "skip"):
            num, den = TIME_SIGNATURES[step["score.timesig"]]
            out.time_sigs.append((idx, num, den))
            continue
        if align != "note":
            raise DecodeError(f"unexpected channel combination {(perf, score, align)}", idx)
        op = OPS[step["align.op"]]
        expected = {MATCH: ("note", "note"), INSERT: ("note", "skip"), DELETE: ("skip", "note")}[op]
        if (perf, score) != expected:
            raise DecodeError(f"{op} step has channels {(perf, score)}, expected {expected}", idx)
        repeat = bool(step["align.repeat"])
        if op == INSERT and repeat:
            raise DecodeError("repeat flag on an extra note", idx)
        perf_note = score_note = None
        score_pass = 0
        if perf == "note":
            onset = q.dequantize_onset(origin, step["perf.t"], step["perf.t_micro"] - MICRO_ZERO)
            perf_note = PerfNote(
                onset_s=onset,
                dur_s=max(q.dequantize_duration_perf(step["perf.dur"]), MIN_PERF_DUR),
                pitch=step["perf.pitch"] + 21,
                velocity=q.dequantize_velocity(step["perf.vel"] + 1),
            )
            out.perf_notes.append(perf_note)
        if score == "note":
            score_note = ScoreNote(
                bar_index=step["score.bar"] + bar_offset,
                pos_ticks=max(0, q.dequantize_score_position(step["score.pos"],
                                                             step["score.pos_micro"] - MICRO_ZERO)),
                pitch=step["score.pitch"] + 21,
                dur_ticks=q.dequantize_duration_score(step["score.dur"]) or 1,
                voice=1,
            )
            score_pass = 2 if repeat else 1
            out.score_notes.append((score_note, score_pass))
        out.records.append(AlignRecord(op, perf_note, score_note, score_pass))
    if require_eos and not ended:
        raise DecodeError("sequence ends without EOS", len(steps))
    return out
