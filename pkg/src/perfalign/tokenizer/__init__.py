"""Tri-stream compound tokens for aligned performance/score/edit-operation data."""
from .baseline import midi_like_tokens
from .codec import Decoded, check_step, decode, encode
from .quantize import (
    PERF_DUR_GRID,
    SCORE_DUR_GRID,
    dequantize_duration_perf,
    dequantize_duration_score,
    dequantize_onset,
    dequantize_score_position,
    dequantize_velocity,
    quantize_duration_perf,
    quantize_duration_score,
    quantize_onset,
    quantize_score_position,
    quantize_velocity,
    round_half_away,
)
from .records import DELETE, INSERT, MATCH, AlignRecord, op_counts, score_key
from .serialize import array_to_steps, from_bytes, from_json, steps_to_array, to_bytes, to_json
from .vocab import BOS, EOS, FIELD_INDEX, FIELDS, N_FIELDS, VOCAB_SIZES, FieldVocab, TriStep

__all__ = [
    "BOS", "DELETE", "EOS", "FIELDS", "FIELD_INDEX", "INSERT", "MATCH", "N_FIELDS", "PERF_DUR_GRID",
    "SCORE_DUR_GRID", "VOCAB_SIZES", "AlignRecord", "Decoded", "FieldVocab", "TriStep", "array_to_steps",
    "check_step", "decode", "dequantize_duration_perf", "dequantize_duration_score", "dequantize_onset",
    "dequantize_score_position", "dequantize_velocity", "encode", "from_bytes", "from_json",
    "midi_like_tokens", "op_counts", "quantize_duration_perf", "quantize_duration_score", "quantize_onset",
    "quantize_score_position", "quantize_velocity", "round_half_away", "score_key", "steps_to_array",
    "to_bytes", "to_json",
]
