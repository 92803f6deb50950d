"""Deterministic stand-ins for the audio and score encoders' inputs."""
from __future__ import annotations

import math

import numpy as np

from ..score_ir.abc import PAD_CHAR, PATCH_LEN

FRAME_RATE = 12
N_KEYS = 88
AUDIO_SEED = 1234

# char ids: 0 pad, 1 unknown, then newline and printable ASCII
CHARS = "\n" + "".join(chr(c) for c in range(32, 127))
CHAR_PAD, CHAR_UNK = 0, 1
CHAR_IDS = {c: i + 2 for i, c in enumerate(CHARS)}
CHAR_IDS[PAD_CHAR] = CHAR_PAD
N_CHARS = len(CHARS) + 2


def frame_count(seconds: float) -> int:
    return max(1, math.ceil(FRAME_RATE * seconds - 1e-9))


def projection_matrix(d_model: int, seed: int = AUDIO_SEED) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((N_KEYS, d_model)) / math.sqrt(N_KEYS)


def piano_roll(perf, seconds: float) -> np.ndarray:
    """[frames x 88] activity: velocity/127 in every frame a note overlaps."""
    frames = frame_count(seconds)
    roll = np.zeros((frames, N_KEYS))
    for n in perf:
        first = int(math.floor(n.onset_s * FRAME_RATE + 1e-9))
        last = int(math.ceil(n.offset_s * FRAME_RATE - 1e-9))
        first, last = max(first, 0), min(max(last, first + 1), frames)
        roll[first:last, n.pitch - 21] = np.maximum(roll[first:last, n.pitch - 21], n.velocity / 127)
    return roll


def render_audio_features(perf, seconds: float, d_model: int = 48, seed: int = AUDIO_SEED) -> np.ndarray:
    """Synthetic 12 frames/s features: piano roll projected by a fixed random matrix."""
    return piano_roll(perf, seconds) @ projection_matrix(d_model, seed)


def patch_char_ids(patches) -> np.ndarray:
    """[bars x 64] char ids; characters outside the alphabet map to the unknown id."""
    texts = [p.text if hasattr(p, "text") else p for p in patches]
    out = np.zeros((len(texts), PATCH_LEN), dtype=np.int64)
    for i, t in enumerate(texts):
        if len(t) != PATCH_LEN:
            raise ValueError(f"patch {i} has {len(t)} characters, expected {PATCH_LEN}")
        out[i] = [CHAR_IDS.get(c, CHAR_UNK) for c in t]
    return out
