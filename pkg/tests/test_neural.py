import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perfalign.errors import ModelInputError, TrainingDiverged
from perfalign.neural import (
    AdamW,
    Schedule,
    ToyDecoderConfig,
    TrainOptions,
    build_corpus,
    decoder_forward,
    embed_score_patches,
    field_accuracy,
    grad_check,
    greedy_decode,
    init_params,
    load_params,
    loss,
    make_batch,
    patch_char_ids,
    render_audio_features,
    repair_step,
    train,
)
import importlib

train_mod = importlib.import_module("perfalign.neural.train")
from perfalign.neural.checkpoint import load_checkpoint, save_checkpoint
from perfalign.neural.features import piano_roll
from perfalign.neural.model import OFFSETS, TOTAL_VOCAB, target_mask
from perfalign.neural.tensor import Tensor, parameter
from perfalign.perf_ir import PerfNote
from perfalign.score_ir import PATCH_LEN
from perfalign.tokenizer import BOS, EOS, FIELD_INDEX, FIELDS, VOCAB_SIZES, check_step
from perfalign.tokenizer.vocab import EXCLUSIVE_FIELDS, MICRO_ZERO

D = 24


@pytest.fixture(scope="module")
def corpus():
    return build_corpus(3, seed=0, d_model=D, bars=(1, 1))


def cfg(**kw):
    return ToyDecoderConfig(**{"d_model": D, "n_blocks": 1, "n_heads": 2, "ffn_hidden": 32, **kw})


def batch_of(samples, dtype=np.float64):
    return make_batch([s.steps for s in samples], [s.audio for s in samples], [s.chars for s in samples], dtype)


def test_forward_shape(corpus):
    c = cfg()
    b = batch_of(corpus)
    out = decoder_forward(b, init_params(c, seed=0), c)
    assert out.shape == (3, b.steps.shape[1], TOTAL_VOCAB)
    assert TOTAL_VOCAB == sum(VOCAB_SIZES) and OFFSETS[-1] + VOCAB_SIZES[-1] == TOTAL_VOCAB


@pytest.mark.parametrize("n_blocks", [1, 2, 3])
def test_causality(corpus, n_blocks):
    c = cfg(n_blocks=n_blocks)
    params = init_params(c, seed=n_blocks)
    b = batch_of(corpus[:1])
    base = decoder_forward(b, params, c).data
    t = b.steps.shape[1] // 2
    b.steps[0, t:] = np.array(BOS.ids)  # perturb the suffix
    pert = decoder_forward(b, params, c).data
    np.testing.assert_array_equal(base[0, :t], pert[0, :t])
    assert not np.allclose(base[0, t:], pert[0, t:])


def test_zero_memories_are_finite(corpus):
    c = cfg()
    s = corpus[0]
    audio = np.zeros_like(s.audio)
    chars = np.zeros((1, PATCH_LEN), dtype=np.int64)
    out = decoder_forward(make_batch([s.steps], [audio], [chars]), init_params(c), c)
    assert np.isfinite(out.data).all()


def test_input_limits(corpus):
    c = cfg(max_len=4)
    with pytest.raises(ModelInputError, match="max length"):
        decoder_forward(batch_of(corpus[:1]), init_params(c), c)
    c = cfg(score_ctx=1)
    with pytest.raises(ModelInputError, match="score patches"):
        decoder_forward(batch_of(corpus[:1]), init_params(c), c)


def test_uniform_logits_closed_form(corpus):
    b = batch_of(corpus)
    targets = b.steps[:, 1:]
    lengths = b.lengths - 1
    logits = Tensor(np.zeros(targets.shape[:2] + (TOTAL_VOCAB,)))
    mask = target_mask(targets, lengths)
    expected = sum(mask[..., i].sum() * math.log(VOCAB_SIZES[i]) for i in range(len(FIELDS))) / lengths.sum()
    assert float(loss(logits, targets, lengths).data) == pytest.approx(expected, rel=1e-12)
    # a full note step supervises every field: sum of log |V|
    note = next(st_ for st_ in corpus[0].steps if check_step(st_) == ("note", "note", "note"))
    one = np.array([note.ids])[None]
    assert float(loss(Tensor(np.zeros((1, 1, TOTAL_VOCAB))), one).data) == pytest.approx(
        sum(math.log(v) for v in VOCAB_SIZES), rel=1e-12)


def test_perfect_logits_give_zero_loss(corpus):
    b = batch_of(corpus)
    targets = b.steps[:, 1:]
    z = np.full(targets.shape[:2] + (TOTAL_VOCAB,), -50.0)
    for i, off in enumerate(OFFSETS):
        np.put_along_axis(z[..., off:off + VOCAB_SIZES[i]], targets[..., i:i + 1], 50.0, axis=-1)
    assert float(loss(Tensor(z), targets, b.lengths - 1).data) < 1e-30


def test_micro_gradients_zero_at_silenced_steps(corpus):
    b = batch_of(corpus)
    targets = b.steps[:, 1:]
    logits = parameter(np.random.default_rng(0).standard_normal(targets.shape[:2] + (TOTAL_VOCAB,)))
    loss(logits, targets, b.lengths - 1).backward()
    for micro, pitch in (("perf.t_micro", "perf.pitch"), ("score.pos_micro", "score.pitch")):
        mi, pi = FIELD_INDEX[micro], FIELD_INDEX[pitch]
        silent = targets[..., pi] == FIELDS[pi].silence_id
        assert silent.any() and (~silent).any()
        g = logits.grad[..., OFFSETS[mi]:OFFSETS[mi] + VOCAB_SIZES[mi]]
        assert np.all(g[silent] == 0)
        valid = np.arange(targets.shape[1])[None] < (b.lengths - 1)[:, None]
        assert np.abs(g[~silent & valid]).sum() > 0


@pytest.mark.parametrize("hierarchical", [True, False])
def test_grad_check(corpus, hierarchical):
    c = cfg(hierarchical=hierarchical, d_model=12, ffn_hidden=16)
    sample = build_corpus(1, seed=5, d_model=12, bars=(1, 1))[0]
    b = make_batch([sample.steps[:8]], [sample.audio], [sample.chars])
    res = grad_check(init_params(c, seed=1), b, c, n_params=120)
    assert res.max_rel_error < 1e-3, res.to_dict()
    assert set(res.per_group) == set(init_params(c, seed=1))


def test_concat_ablation_parameters():
    h = init_params(cfg(hierarchical=True))
    m = init_params(cfg(hierarchical=False))
    assert any(".xa." in k for k in h) and any(".xs." in k for k in h) and not any(".xm." in k for k in h)
    assert any(".xm." in k for k in m) and not any(".xa." in k for k in m)


def test_identical_patches_embed_identically(corpus):
    params = init_params(cfg())
    row = corpus[0].chars[1]
    emb = embed_score_patches(np.stack([row, row, corpus[0].chars[0]]), params).data
    np.testing.assert_array_equal(emb[0], emb[1])
    assert not np.allclose(emb[0], emb[2])


def test_patch_char_ids_rejects_wrong_length():
    with pytest.raises(ValueError):
        patch_char_ids(["abc"])


def test_audio_features():
    assert np.all(render_audio_features([], 2.0, D) == 0)
    roll = piano_roll([PerfNote(0.0, 1.0, 60, 127)], 2.0)
    assert roll.shape == (24, 88)
    assert roll[:, 60 - 21].sum() == 12 and roll[:12, 60 - 21].min() == 1.0
    feats = render_audio_features([PerfNote(0.0, 1.0, 60, 127)], 2.0, D)
    assert feats.shape == (24, D) and np.all(feats[12:] == 0)


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1))
def test_repair_enforces_exclusive_invariant(seed):
    row = np.random.default_rng(seed).standard_normal(TOTAL_VOCAB) * 3
    step = repair_step(row)
    if step["global.marker"]:
        assert check_step(step) == ("silent", "silent", "silent")
        return
    for channel, names in EXCLUSIVE_FIELDS.items():
        active = [n for n in names if step[n] != FIELDS[FIELD_INDEX[n]].silence_id]
        assert len(active) <= 1
        if active:
            others = [f for f in FIELDS if f.channel == channel and f.name != active[0]]
            assert all(step[f.name] == (MICRO_ZERO if f.silence_id is None else f.silence_id) for f in others)
    for micro, pitch in (("perf.t_micro", "perf.pitch"), ("score.pos_micro", "score.pitch")):
        if step[pitch] == FIELDS[FIELD_INDEX[pitch]].silence_id:
            assert step[micro] == MICRO_ZERO


def test_schedule_shape():
    s = Schedule(total=1000, warmup=100)
    assert s.lr(0) == 1e-3 and s.lr(100) == pytest.approx(1e-2)
    assert s.lr(50) == pytest.approx(5.5e-3)
    assert s.lr(1000) == pytest.approx(1e-5)
    lrs = [s.lr(k) for k in range(100, 1001)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_adamw_minimizes_quadratic():
    p = {"w": parameter(np.array([3.0, -2.0]))}
    opt = AdamW(p, weight_decay=0.0, clip=0)
    for _ in range(300):
        opt.zero_grad()
        p["w"].grad = 2 * p["w"].data
        opt.step(0.05)
    assert np.abs(p["w"].data).max() < 0.05


def test_checkpoint_round_trip(tmp_path):
    arrays = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "b.c": np.array([1.5], dtype=np.float32)}
    path = tmp_path / "x.bin"
    save_checkpoint(path, {"d_model": 4}, arrays, {"step": 7})
    cfg_d, back, state = load_checkpoint(path)
    assert cfg_d == {"d_model": 4} and state == {"step": 7}
    assert set(back) == set(arrays) and all(np.array_equal(back[k], arrays[k]) for k in arrays)
    assert path.read_bytes()[:8] == b"PFALCKPT"


def test_training_is_deterministic_and_resumable(corpus, tmp_path):
    c = cfg()
    sched = Schedule(total=6, warmup=2)
    a = train(corpus, c, sched, TrainOptions(seed=3, checkpoint_every=3, out_dir=str(tmp_path / "a")))
    b = train(corpus, c, sched, TrainOptions(seed=3, out_dir=str(tmp_path / "b"), checkpoint_every=100))
    assert a.losses == b.losses
    assert a.losses[-1][2] < a.losses[0][2]
    r = train(corpus, c, sched, TrainOptions(seed=3, out_dir=str(tmp_path / "r"), checkpoint_every=100),
              resume_from=os.path.join(tmp_path, "a", "ckpt_3.bin"))
    assert r.losses == a.losses[3:]
    _, pa = load_params(a.checkpoint)
    _, pr = load_params(r.checkpoint)
    for k in pa:
        np.testing.assert_array_equal(pa[k].data, pr[k].data)
    lines = (tmp_path / "a" / "loss.csv").read_text().splitlines()
    assert lines[0] == "step,lr,loss" and len(lines) == 7


def test_minibatches_cover_corpus(corpus):
    idx = [train_mod._batches(5, 2, seed=1, step=k) for k in range(3)]
    assert sorted(np.concatenate(idx).tolist()) == list(range(5))
    assert np.array_equal(train_mod._batches(5, 2, 1, 4), train_mod._batches(5, 2, 1, 4))


def test_divergence_names_last_checkpoint(corpus, tmp_path, monkeypatch):
    c = cfg()
    real = train_mod.sequence_loss
    calls = {"n": 0}

    def flaky(batch, params, config):
        calls["n"] += 1
        out = real(batch, params, config)
        return Tensor(np.array(np.nan)) if calls["n"] > 2 else out
    monkeypatch.setattr(train_mod, "sequence_loss", flaky)
    with pytest.raises(TrainingDiverged) as exc:
        train(corpus, c, Schedule(total=5, warmup=1), TrainOptions(out_dir=str(tmp_path), checkpoint_every=2))
    assert exc.value.step == 2 and exc.value.checkpoint.endswith("ckpt_2.bin")


def test_short_overfit_and_greedy_decode():
    samples = build_corpus(2, seed=4, d_model=D, bars=(1, 1), mistake_rate=0.0)
    c = cfg(n_blocks=2, ffn_hidden=48)
    res = train(samples, c, Schedule(total=400, warmup=20), TrainOptions(target_accuracy=1.0, eval_every=20))
    assert min(res.accuracy.values()) == 1.0
    for s in samples:
        out = greedy_decode(s.audio, s.chars, res.params, c)
        assert out == s.steps
        assert out[0] == BOS and out[-1] == EOS
