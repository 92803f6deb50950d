"""JSON Schemas for every file the command line writes."""
from __future__ import annotations

import jsonschema

from .errors import PerfAlignError

_int = {"type": "integer"}
_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_pitch = {"type": "integer", "minimum": 21, "maximum": 108}

PROVENANCE = {
    "type": "object",
    "required": ["tool", "version", "command", "seed", "config"],
    "properties": {
        "tool": {"const": "perfalign"},
        "version": {"type": "string"},
        "command": {"type": "string"},
        "seed": {"type": ["integer", "null"]},
        "config": {"type": "object"},
    },
}

SCORE_NOTE = {
    "type": "object",
    "required": ["bar", "pos", "dur", "pitch", "voice"],
    "properties": {"bar": {"type": "integer", "minimum": 0}, "pos": {"type": "integer", "minimum": 0},
                   "dur": {"type": "integer", "minimum": 1}, "pitch": _pitch, "voice": _int},
}

PERF_NOTE = {
    "type": "object",
    "required": ["onset_s", "dur_s", "pitch", "velocity"],
    "additionalProperties": False,
    "properties": {"onset_s": _nonneg, "dur_s": {"type": "number", "exclusiveMinimum": 0}, "pitch": _pitch,
                   "velocity": {"type": "integer", "minimum": 1, "maximum": 127}},
}

SCORE_IR = {
    "type": "object",
    "required": ["bar_count", "key_fifths", "time_sigs", "repeats", "bar_text", "notes"],
    "properties": {
        "bar_count": {"type": "integer", "minimum": 0},
        "key_fifths": {"type": "integer", "minimum": -7, "maximum": 7},
        "time_sigs": {"type": "array", "items": {"type": "array", "items": _int, "minItems": 3, "maxItems": 3}},
        "repeats": {"type": "array", "items": {
            "type": "object", "required": ["kind", "bar"],
            "properties": {"kind": {"enum": ["forward", "backward", "volta_start", "volta_end"]}, "bar": _int}}},
        "bar_text": {"type": "object", "additionalProperties": {"type": "string"}},
        "notes": {"type": "array", "items": SCORE_NOTE},
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}

UNFOLDED = {
    "type": "object",
    "required": ["bars", "notes"],
    "properties": {
        "bars": {"type": "array", "items": {
            "type": "object", "required": ["linear", "source", "pass"],
            "properties": {"linear": _int, "source": _int, "pass": {"type": "integer", "minimum": 1}}}},
        "notes": {"type": "array", "items": SCORE_NOTE},
    },
}

PATCHES = {
    "type": "object",
    "required": ["patches", "lossiness"],
    "properties": {
        "patches": {"type": "array", "items": {
            "type": "object", "required": ["bar", "text", "full_length", "truncated"],
            "properties": {"bar": _int, "text": {"type": "string", "minLength": 64, "maxLength": 64},
                           "full_length": _int, "truncated": {"type": "boolean"}}}},
        "lossiness": {"type": "array"},
    },
}

MATCH_ROW = {
    "type": "object",
    "required": ["perf_index", "score_linear_index", "op", "repeat_flag", "score_pass"],
    "properties": {
        "perf_index": _int, "score_linear_index": _int, "op": {"enum": ["match", "insert", "delete"]},
        "repeat_flag": {"enum": [0, 1]}, "score_pass": {"type": "integer", "minimum": 0},
    },
}

TRISTEPS = {
    "type": "object",
    "required": ["format", "version", "rows"],
    "properties": {
        "format": {"const": "tristeps"},
        "version": {"const": 1},
        "rows": {"type": "object", "required": ["global", "perf", "score", "align"]},
    },
}

METRIC = {
    "type": "object",
    "required": ["precision", "recall", "f1", "accuracy", "tp", "fp", "fn"],
    "properties": {k: {"type": "number", "minimum": 0, "maximum": 1} for k in ("precision", "recall", "f1", "accuracy")}
    | {k: {"type": "integer", "minimum": 0} for k in ("tp", "fp", "fn")},
}

METRICS_REPORT = {
    "type": "object",
    "required": ["accuracy_formula", "files"],
    "properties": {
        "accuracy_formula": {"type": "string"},
        "files": {"type": "object", "additionalProperties": {
            "type": "object", "additionalProperties": {"anyOf": [METRIC, _num, {"type": "null"}]}}},
        "aggregate": {"type": "object"},
    },
}

MISTAKES = {
    "type": "object",
    "required": ["correct", "extra", "missed"],
    "properties": {
        "correct": {"type": "array", "items": {"type": "object", "required": ["perf", "score", "pass"],
                                                "properties": {"perf": PERF_NOTE, "score": SCORE_NOTE}}},
        "extra": {"type": "array", "items": PERF_NOTE},
        "missed": {"type": "array", "items": {"type": "object", "required": ["score", "pass"],
                                               "properties": {"score": SCORE_NOTE}}},
    },
}

AUGMENT_LOG = {
    "type": "object",
    "required": ["kind", "seed"],
    "properties": {"kind": {"enum": ["score", "performance", "repeats"]}, "seed": _int,
                   "edits": {"type": "array"}},
}

CORPUS = {
    "type": "object",
    "required": ["pieces"],
    "properties": {"pieces": {"type": "array", "items": {
        "type": "object", "required": ["name", "score", "perf", "truth"],
        "properties": {k: {"type": "string"} for k in ("name", "score", "perf", "truth")}}}},
}

GRADCHECK = {
    "type": "object",
    "required": ["max_rel_error", "worst_param", "n_checked", "per_group"],
    "properties": {"max_rel_error": _nonneg, "worst_param": {"type": "string"},
                   "n_checked": {"type": "integer", "minimum": 1}},
}

TRAIN_REPORT = {
    "type": "object",
    "required": ["steps", "final_loss", "accuracy", "checkpoint"],
    "properties": {"steps": _int, "final_loss": _num,
                   "accuracy": {"type": "object", "additionalProperties": {"type": "number"}},
                   "checkpoint": {"type": ["string", "null"]}},
}

INFER_REPORT = {
    "type": "object",
    "required": ["samples"],
    "properties": {"samples": {"type": "array", "items": {
        "type": "object", "required": ["name", "steps", "exact", "decode_error"]}}},
}

ERROR = {
    "type": "object",
    "required": ["error", "message", "exit_code"],
    "properties": {"error": {"type": "string"}, "message": {"type": "string"}, "exit_code": _int},
}


class SchemaViolation(PerfAlignError):
    """An output failed its schema; nothing was written."""

    exit_code = 4


def check(instance, schema, what: str = "output"):
    try:
        jsonschema.validate(instance, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaViolation(f"{what} failed schema validation at '{path}': {exc.message}") from None
    return instance
