"""Toy tri-stream decoder.

Each block runs pre-norm causal self-attention, cross-attention over the
audio frames, cross-attention over the score bar vectors, then a gated FFN.
The final hidden state is split into three streams (performance, score,
alignment); each stream feeds the softmax heads of its channel's fields.
The global BOS/EOS head reads the alignment stream.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ModelInputError
from ..score_ir.abc import PATCH_LEN
from ..tokenizer.codec import check_step
from ..tokenizer.vocab import (
    ALIGN,
    CHANNELS,
    EXCLUSIVE_FIELDS,
    FIELD_INDEX,
    FIELDS,
    GLOBAL,
    GLOBAL_EOS,
    GLOBAL_NONE,
    MICRO,
    MICRO_ZERO,
    N_FIELDS,
    NOTE_FIELDS,
    PERF,
    SCORE,
    VOCAB_SIZES,
    BOS,
    TriStep,
    silent_ids,
)
from .features import N_CHARS
from .tensor import Tensor, concat, embedding, layer_norm, multi_field_cross_entropy, parameter

NEG_INF = -1e9
OFFSETS = tuple(int(x) for x in np.concatenate([[0], np.cumsum(VOCAB_SIZES)[:-1]]))
TOTAL_VOCAB = int(sum(VOCAB_SIZES))
HEAD_STREAM = {PERF: 0, SCORE: 1, ALIGN: 2, GLOBAL: 2}


@dataclass
class ToyDecoderConfig:
    d_model: int = 48
    n_blocks: int = 2
    n_heads: int = 4
    ffn_hidden: int = 96
    max_len: int = 128
    audio_ctx: int = 512
    score_ctx: int = 51  # header patch + 50 bars
    char_dim: int = 4
    hierarchical: bool = True  # False: one cross-attention over [audio; score]
    vocab_sizes: tuple = field(default_factory=lambda: tuple(VOCAB_SIZES))

    def __post_init__(self):
        self.vocab_sizes = tuple(self.vocab_sizes)
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.vocab_sizes != tuple(VOCAB_SIZES):
            raise ValueError("vocabulary sizes differ from the tokenizer's")

    @property
    def stream_widths(self) -> tuple[int, int, int]:
        w = self.d_model // 3
        return w, w, self.d_model - 2 * w

    @property
    def stream_slices(self):
        a, b, _ = self.stream_widths
        return slice(0, a), slice(a, a + b), slice(a + b, self.d_model)

    def to_dict(self):
        d = asdict(self)
        d["vocab_sizes"] = list(self.vocab_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---- parameters -------------------------------------------------------------

def _attn_names(prefix):
    return [f"{prefix}.{m}" for m in ("wq", "wk", "wv", "wo")]


def init_params(config: ToyDecoderConfig, seed: int = 0, dtype=np.float64) -> dict:
    """Ordered name -> Tensor map. Every field has its own input table, so the
    performance and score pitch embeddings never share weights."""
    rng = np.random.default_rng(seed)
    d = config.d_model

    def normal(*shape, scale=None):
        s = scale if scale is not None else 1.0 / math.sqrt(shape[0])
        return (rng.standard_normal(shape) * s).astype(dtype)

    p = {}
    for f in FIELDS:
        p[f"embed.{f.name}"] = normal(f.size, d, scale=0.1)
    p["pos.steps"] = normal(config.max_len, d, scale=0.02)
    p["pos.audio"] = normal(config.audio_ctx, d, scale=0.02)
    p["pos.score"] = normal(config.score_ctx, d, scale=0.02)
    p["chars.embed"] = normal(N_CHARS, config.char_dim, scale=0.1)
    p["chars.proj_w"] = normal(PATCH_LEN * config.char_dim, d)
    p["chars.proj_b"] = np.zeros(d, dtype=dtype)
    cross = ("xa", "xs") if config.hierarchical else ("xm",)
    for b in range(config.n_blocks):
        pre = f"block{b}"
        for sub in ("sa",) + cross:
            p[f"{pre}.{sub}.ln_w"] = np.ones(d, dtype=dtype)
            p[f"{pre}.{sub}.ln_b"] = np.zeros(d, dtype=dtype)
            for name in _attn_names(f"{pre}.{sub}"):
                p[name] = normal(d, d)
            p[f"{pre}.{sub}.wo"] *= 1.0 / math.sqrt(2 * config.n_blocks)
        p[f"{pre}.ffn.ln_w"] = np.ones(d, dtype=dtype)
        p[f"{pre}.ffn.ln_b"] = np.zeros(d, dtype=dtype)
        p[f"{pre}.ffn.gate"] = normal(d, config.ffn_hidden)
        p[f"{pre}.ffn.up"] = normal(d, config.ffn_hidden)
        p[f"{pre}.ffn.down"] = normal(config.ffn_hidden, d) / math.sqrt(2 * config.n_blocks)
    p["final.ln_w"] = np.ones(d, dtype=dtype)
    p["final.ln_b"] = np.zeros(d, dtype=dtype)
    widths = config.stream_widths
    for f in FIELDS:
        w = widths[HEAD_STREAM[f.channel]]
        p[f"head.{f.name}.w"] = normal(w, f.size)
        p[f"head.{f.name}.b"] = np.zeros(f.size, dtype=dtype)
    return {k: parameter(v, name=k) for k, v in p.items()}


def cast_params(params: dict, dtype) -> dict:
    return {k: parameter(v.data.astype(dtype), name=k) for k, v in params.items()}


# ---- batching ---------------------------------------------------------------

@dataclass
class Batch:
    """Padded inputs for B sequences.

    ``steps`` [B, T, F] field ids, ``lengths`` [B]; ``audio`` [B, Fa, d] with
    ``audio_len``; ``chars`` [B, Nb, 64] char ids with ``bars_len``.
    """
    steps: np.ndarray
    lengths: np.ndarray
    audio: np.ndarray
    audio_len: np.ndarray
    chars: np.ndarray
    bars_len: np.ndarray


def _pad_stack(arrays, fill, dtype):
    n = max(a.shape[0] for a in arrays)
    out = np.full((len(arrays), n) + arrays[0].shape[1:], fill, dtype=dtype)
    for i, a in enumerate(arrays):
        out[i, :a.shape[0]] = a
    return out


def make_batch(step_seqs, audios, char_ids, dtype=np.float64) -> Batch:
    steps = [np.asarray([s.ids if isinstance(s, TriStep) else s for s in seq], dtype=np.int64) for seq in step_seqs]
    pad = np.asarray(silent_ids(), dtype=np.int64)
    n = max(len(s) for s in steps)
    arr = np.tile(pad, (len(steps), n, 1))
    for i, s in enumerate(steps):
        arr[i, :len(s)] = s
    return Batch(
        steps=arr,
        lengths=np.array([len(s) for s in steps]),
        audio=_pad_stack([np.asarray(a, dtype=dtype) for a in audios], 0.0, dtype),
        audio_len=np.array([len(a) for a in audios]),
        chars=_pad_stack([np.asarray(c, dtype=np.int64) for c in char_ids], 0, np.int64),
        bars_len=np.array([len(c) for c in char_ids]),
    )


# ---- forward ----------------------------------------------------------------

def embed_score_patches(char_ids: np.ndarray, params: dict) -> Tensor:
    """[..., bars, 64] char ids -> [..., bars, d]: per-char embeddings stacked
    and projected to the model width."""
    emb = embedding(params["chars.embed"], char_ids)
    flat = emb.reshape(*char_ids.shape[:-1], char_ids.shape[-1] * emb.shape[-1])
    return flat @ params["chars.proj_w"] + params["chars.proj_b"]


def _attention(x: Tensor, mem: Tensor, params, prefix: str, n_heads: int, mask: np.ndarray) -> Tensor:
    b, t, d = x.shape
    m = mem.shape[1]
    dh = d // n_heads

    def heads(z, n):
        return z.reshape(b, n, n_heads, dh).transpose(0, 2, 1, 3)

    q = heads(x @ params[f"{prefix}.wq"], t)
    k = heads(mem @ params[f"{prefix}.wk"], m)
    v = heads(mem @ params[f"{prefix}.wv"], m)
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh)) + mask
    ctx = scores.softmax(axis=-1) @ v
    return ctx.transpose(0, 2, 1, 3).reshape(b, t, d) @ params[f"{prefix}.wo"]


def _key_mask(lengths, size, dtype):
    valid = np.arange(size)[None, :] < np.asarray(lengths)[:, None]
    return np.where(valid, 0.0, NEG_INF).astype(dtype)[:, None, None, :]


def decoder_forward(batch: Batch, params: dict, config: ToyDecoderConfig) -> Tensor:
    """Logits [B, T, sum of field vocab sizes], field f at OFFSETS[f]."""
    ids = batch.steps
    b, t, nf = ids.shape
    if nf != N_FIELDS:
        raise ModelInputError(f"expected {N_FIELDS} fields per step, got {nf}")
    if t > config.max_len:
        raise ModelInputError(f"prefix of {t} steps exceeds max length {config.max_len}")
    if batch.audio.shape[1] > config.audio_ctx:
        raise ModelInputError(f"{batch.audio.shape[1]} audio frames exceed context {config.audio_ctx}")
    if batch.chars.shape[1] > config.score_ctx:
        raise ModelInputError(f"{batch.chars.shape[1]} score patches exceed context {config.score_ctx}")
    if batch.audio.shape[-1] != config.d_model:
        raise ModelInputError(f"audio width {batch.audio.shape[-1]} != d_model {config.d_model}")
    dtype = params["pos.steps"].dtype

    x = params["pos.steps"][:t]
    for i, f in enumerate(FIELDS):
        x = x + embedding(params[f"embed.{f.name}"], ids[:, :, i])
    audio = Tensor(batch.audio.astype(dtype)) + params["pos.audio"][:batch.audio.shape[1]]
    score = embed_score_patches(batch.chars, params) + params["pos.score"][:batch.chars.shape[1]]

    causal = np.triu(np.full((t, t), NEG_INF, dtype=dtype), k=1)[None, None]
    audio_mask = _key_mask(batch.audio_len, batch.audio.shape[1], dtype)
    score_mask = _key_mask(batch.bars_len, batch.chars.shape[1], dtype)
    if config.hierarchical:
        cross = [("xa", audio, audio_mask), ("xs", score, score_mask)]
    else:
        cross = [("xm", concat([audio, score], axis=1), np.concatenate([audio_mask, score_mask], axis=-1))]

    for blk in range(config.n_blocks):
        pre = f"block{blk}"
        h = layer_norm(x, params[f"{pre}.sa.ln_w"], params[f"{pre}.sa.ln_b"])
        x = x + _attention(h, h, params, f"{pre}.sa", config.n_heads, causal)
        for name, mem, mask in cross:
            h = layer_norm(x, params[f"{pre}.{name}.ln_w"], params[f"{pre}.{name}.ln_b"])
            x = x + _attention(h, mem, params, f"{pre}.{name}", config.n_heads, mask)
        h = layer_norm(x, params[f"{pre}.ffn.ln_w"], params[f"{pre}.ffn.ln_b"])
        gated = (h @ params[f"{pre}.ffn.gate"]).silu() * (h @ params[f"{pre}.ffn.up"])
        x = x + gated @ params[f"{pre}.ffn.down"]
    x = layer_norm(x, params["final.ln_w"], params["final.ln_b"])

    streams = [x[..., s] for s in config.stream_slices]
    # one matmul per stream over its fields' concatenated heads
    by_stream = {0: [], 1: [], 2: []}
    for f in FIELDS:
        by_stream[HEAD_STREAM[f.channel]].append(f.name)
    out = {}
    for s, names in by_stream.items():
        w = concat([params[f"head.{n}.w"] for n in names], axis=1)
        bias = concat([params[f"head.{n}.b"] for n in names], axis=0)
        logits = streams[s] @ w + bias
        col = 0
        for n in names:
            size = VOCAB_SIZES[FIELD_INDEX[n]]
            out[n] = logits[..., col:col + size]
            col += size
    return concat([out[f.name] for f in FIELDS], axis=-1)


def field_logits(logits: np.ndarray, name: str) -> np.ndarray:
    i = FIELD_INDEX[name]
    return logits[..., OFFSETS[i]:OFFSETS[i] + VOCAB_SIZES[i]]


# ---- loss -------------------------------------------------------------------

_MICRO_IDX = {f.channel: FIELD_INDEX[f.name] for f in FIELDS if f.kind == MICRO}
_PITCH_IDX = {PERF: FIELD_INDEX["perf.pitch"], SCORE: FIELD_INDEX["score.pitch"]}
_SILENCE = np.array([-1 if f.silence_id is None else f.silence_id for f in FIELDS])


def target_mask(targets: np.ndarray, lengths=None) -> np.ndarray:
    """[B, T, F] boolean supervision mask.

    Silenced fields are supervised toward their silence id; micro fields have
    none, so they are masked out unless their channel carries a note.
    """
    mask = np.ones(targets.shape, dtype=bool)
    for channel, mi in _MICRO_IDX.items():
        pi = _PITCH_IDX[channel]
        mask[..., mi] = targets[..., pi] != _SILENCE[pi]
    if lengths is not None:
        valid = np.arange(targets.shape[1])[None, :] < np.asarray(lengths)[:, None]
        mask &= valid[..., None]
    return mask


def validate_targets(step_seqs):
    for seq in step_seqs:
        for k, s in enumerate(seq):
            check_step(s if isinstance(s, TriStep) else TriStep(tuple(int(v) for v in s)), k)


def loss(logits: Tensor, targets: np.ndarray, lengths=None) -> Tensor:
    """Mean over supervised positions of the summed per-field cross-entropy."""
    mask = target_mask(targets, lengths)
    n_pos = int(np.sum(lengths)) if lengths is not None else int(np.prod(targets.shape[:-1]))
    return multi_field_cross_entropy(logits, targets, mask, OFFSETS, VOCAB_SIZES, max(n_pos, 1))


def shift_batch(batch: Batch) -> tuple[Batch, np.ndarray, np.ndarray]:
    """Teacher forcing: inputs are steps[:-1], targets steps[1:]."""
    inp = Batch(batch.steps[:, :-1], batch.lengths - 1, batch.audio, batch.audio_len, batch.chars, batch.bars_len)
    return inp, batch.steps[:, 1:], batch.lengths - 1


def sequence_loss(batch: Batch, params: dict, config: ToyDecoderConfig) -> Tensor:
    inp, targets, lengths = shift_batch(batch)
    return loss(decoder_forward(inp, params, config), targets, lengths)


def field_accuracy(batch: Batch, params: dict, config: ToyDecoderConfig) -> dict:
    """Teacher-forced per-field accuracy over supervised positions."""
    inp, targets, lengths = shift_batch(batch)
    logits = decoder_forward(inp, params, config).data
    mask = target_mask(targets, lengths)
    out = {}
    for i, f in enumerate(FIELDS):
        pred = field_logits(logits, f.name).argmax(axis=-1)
        m = mask[..., i]
        out[f.name] = float((pred[m] == targets[..., i][m]).mean()) if m.any() else 1.0
    return out


# ---- inference --------------------------------------------------------------

def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def repair_step(logits_row: np.ndarray) -> TriStep:
    """Argmax per field; an exclusive winner silences the rest of its channel,
    a BOS/EOS marker silences every channel. Micro fields of a channel without
    a note are set to their zero value."""
    ids = [int(field_logits(logits_row, f.name).argmax()) for f in FIELDS]
    silent = silent_ids()
    if ids[FIELD_INDEX["global.marker"]] != GLOBAL_NONE:
        silent[FIELD_INDEX["global.marker"]] = ids[FIELD_INDEX["global.marker"]]
        return TriStep(tuple(silent))
    for channel in CHANNELS:
        winners = [n for n in EXCLUSIVE_FIELDS[channel] if ids[FIELD_INDEX[n]] != _SILENCE[FIELD_INDEX[n]]]
        if not winners:
            continue

        def active_prob(n):
            p = _softmax(field_logits(logits_row, n))
            return 1.0 - p[_SILENCE[FIELD_INDEX[n]]]
        keep = max(winners, key=active_prob)
        for f in FIELDS:
            if f.channel == channel and f.name != keep:
                ids[FIELD_INDEX[f.name]] = silent[FIELD_INDEX[f.name]]
    # micro fields are unsupervised without a note; emit their canonical zero
    for channel, mi in _MICRO_IDX.items():
        if ids[_PITCH_IDX[channel]] == _SILENCE[_PITCH_IDX[channel]]:
            ids[mi] = MICRO_ZERO
    return TriStep(tuple(ids))


def greedy_decode(audio: np.ndarray, char_ids: np.ndarray, params: dict, config: ToyDecoderConfig,
                  max_steps: int | None = None) -> list[TriStep]:
    """Autoregressive argmax decoding from BOS until EOS or ``max_steps``.

    The returned list starts with BOS and ends with EOS when one was produced.
    """
    limit = config.max_len if max_steps is None else min(max_steps, config.max_len)
    seq = [BOS]
    while len(seq) < limit:
        batch = make_batch([seq], [audio], [char_ids], dtype=params["pos.steps"].dtype)
        logits = decoder_forward(batch, params, config).data[0, -1]
        step = repair_step(logits)
        seq.append(step)
        if step["global.marker"] == GLOBAL_EOS:
            break
    return seq


__all__ = [
    "Batch", "ToyDecoderConfig", "decoder_forward", "embed_score_patches", "field_accuracy", "greedy_decode",
    "init_params", "loss", "make_batch", "repair_step", "sequence_loss", "target_mask", "validate_targets",
]
