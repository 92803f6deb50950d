"""Toy tri-stream decoder on a small numpy autodiff core."""
from .corpus import Piece, Sample, build_corpus, make_piece, make_sample, piece_to_sample
from .features import patch_char_ids, render_audio_features
from .gradcheck import GradCheckResult, grad_check
from .model import (
    Batch,
    ToyDecoderConfig,
    decoder_forward,
    embed_score_patches,
    field_accuracy,
    greedy_decode,
    init_params,
    loss,
    make_batch,
    repair_step,
    sequence_loss,
)
from .optim import AdamW, Schedule
from .train import TrainOptions, TrainResult, load_params, train

__all__ = [
    "AdamW", "Batch", "GradCheckResult", "Piece", "Sample", "Schedule", "ToyDecoderConfig", "TrainOptions", "TrainResult",
    "build_corpus", "decoder_forward", "embed_score_patches", "field_accuracy", "grad_check", "greedy_decode",
    "init_params", "load_params", "loss", "make_batch", "make_piece", "make_sample", "piece_to_sample", "patch_char_ids", "render_audio_features",
    "repair_step", "sequence_loss", "train",
]
