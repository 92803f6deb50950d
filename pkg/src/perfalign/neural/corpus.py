"""Synthetic (score patches, audio features, tri-stream targets) samples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..aligner import records_from_pairs
from ..augment import modulate_performance, performance_modulation_truth
from ..score_ir import ScoreIR, to_abc_interleaved, unfold_repeats
from ..synth import random_score, render_performance
from ..tokenizer import encode
from .features import patch_char_ids, render_audio_features


@dataclass
class Piece:
    score: ScoreIR
    perf: list
    records: list  # ground-truth AlignRecords

    @property
    def seconds(self) -> float:
        return max((n.offset_s for n in self.perf), default=0.0) + 0.05


@dataclass
class Sample:
    steps: list        # TriStep, BOS ... EOS
    audio: np.ndarray  # [frames, d_model]
    chars: np.ndarray  # [bars + 1, 64] char ids (header patch first)


def make_piece(rng: np.random.Generator, bars=(2, 4), mistake_rate: float = 0.1, bpm_range=(90, 140),
               jitter: float = 0.2) -> Piece:
    """A random score rendered verbatim, then (optionally) given performance mistakes."""
    n_bars = int(rng.integers(bars[0], bars[1] + 1))
    score = random_score(rng, n_bars=n_bars, chord_prob=0.15)
    unfolded = unfold_repeats(score)
    perf, pairs = render_performance(unfolded, rng, bpm=float(rng.uniform(*bpm_range)), jitter=jitter)
    if mistake_rate:
        rates = {"insert": mistake_rate, "delete": mistake_rate, "shift": mistake_rate}
        new_perf, log = modulate_performance(perf, rates, seed=int(rng.integers(2**31)))
        return Piece(score, new_perf, performance_modulation_truth(unfolded, new_perf, pairs, log))
    return Piece(score, perf, records_from_pairs(pairs, perf, unfolded))


def piece_to_sample(piece: Piece, d_model: int = 48) -> Sample:
    steps = encode(piece.records, [tuple(t) for t in piece.score.time_sigs])
    audio = render_audio_features(piece.perf, piece.seconds, d_model)
    chars = patch_char_ids(to_abc_interleaved(piece.score))
    return Sample(steps, audio, chars)


def make_sample(rng: np.random.Generator, d_model: int = 48, **kwargs) -> Sample:
    return piece_to_sample(make_piece(rng, **kwargs), d_model)


def piece_rngs(n: int, seed: int) -> list[np.random.Generator]:
    """One independent generator per piece, so piece k does not depend on n."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def build_corpus(n: int, seed: int = 0, d_model: int = 48, **kwargs) -> list[Sample]:
    return [make_sample(rng, d_model=d_model, **kwargs) for rng in piece_rngs(n, seed)]
