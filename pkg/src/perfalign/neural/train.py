"""Teacher-forced training loop with checkpoints and a CSV loss log."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDiverged
from .checkpoint import load_checkpoint, save_checkpoint
from .model import ToyDecoderConfig, field_accuracy, init_params, make_batch, sequence_loss, validate_targets
from .optim import AdamW, Schedule
from .tensor import parameter


@dataclass
class TrainOptions:
    seed: int = 0
    batch_size: int = 0          # 0: full corpus every step
    weight_decay: float = 0.01
    clip: float = 1.0
    eval_every: int = 50
    target_accuracy: float | None = None  # stop once every field reaches it
    checkpoint_every: int = 500
    out_dir: str | None = None
    dtype: str = "float32"


@dataclass
class TrainResult:
    params: dict
    config: ToyDecoderConfig
    losses: list = field(default_factory=list)   # (step, lr, loss)
    accuracy: dict = field(default_factory=dict)
    steps: int = 0
    checkpoint: str | None = None


def _batches(n: int, batch_size: int, seed: int, step: int):
    """Indices of the batch used at ``step``; a pure function of (seed, step)."""
    if not batch_size or batch_size >= n:
        return np.arange(n)
    per_epoch = math.ceil(n / batch_size)
    epoch, k = divmod(step, per_epoch)
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return np.sort(order[k * batch_size:(k + 1) * batch_size])


def _state_arrays(params, opt: AdamW) -> dict:
    arrays = {k: p.data for k, p in params.items()}
    arrays.update({f"opt.m.{k}": v for k, v in opt.m.items()})
    arrays.update({f"opt.v.{k}": v for k, v in opt.v.items()})
    return arrays


def write_checkpoint(path, params, opt, config: ToyDecoderConfig, schedule: Schedule, options: TrainOptions,
                     step: int) -> None:
    state = {"step": step, "opt_t": opt.t, "schedule": schedule.to_dict(), "seed": options.seed}
    save_checkpoint(path, config.to_dict(), _state_arrays(params, opt), state)


def load_params(path, dtype=np.float32):
    """(config, params) from a checkpoint; optimizer blobs are ignored."""
    cfg, arrays, _ = load_checkpoint(path)
    config = ToyDecoderConfig.from_dict(cfg)
    params = {k: parameter(v.astype(dtype), name=k) for k, v in arrays.items() if not k.startswith("opt.")}
    return config, params


def train(corpus, config: ToyDecoderConfig, schedule: Schedule, options: TrainOptions | None = None,
          resume_from: str | None = None, log=None) -> TrainResult:
    """Optimize next-step prediction on ``corpus`` (a list of Sample).

    Deterministic for a fixed seed. With ``out_dir`` set, checkpoints go to
    ``<out_dir>/ckpt_<step>.bin`` and ``<out_dir>/last.bin``, and the loss log
    to ``<out_dir>/loss.csv``. A non-finite loss raises TrainingDiverged
    naming the last good checkpoint.
    """
    options = options or TrainOptions()
    dtype = np.dtype(options.dtype)
    validate_targets([s.steps for s in corpus])
    params = init_params(config, seed=options.seed, dtype=dtype)
    opt = AdamW(params, weight_decay=options.weight_decay, clip=options.clip)
    start = 0
    last_ckpt = None
    if resume_from:
        cfg, arrays, state = load_checkpoint(resume_from)
        for k, p in params.items():
            p.data = arrays[k].astype(dtype)
            opt.m[k] = arrays[f"opt.m.{k}"].astype(dtype)
            opt.v[k] = arrays[f"opt.v.{k}"].astype(dtype)
        opt.t = int(state["opt_t"])
        start = int(state["step"])
        last_ckpt = resume_from

    log_fh = None
    if options.out_dir:
        os.makedirs(options.out_dir, exist_ok=True)
        log_path = os.path.join(options.out_dir, "loss.csv")
        log_fh = open(log_path, "a" if resume_from and os.path.exists(log_path) else "w")
        if log_fh.tell() == 0:
            log_fh.write("step,lr,loss\n")

    full = make_batch([s.steps for s in corpus], [s.audio for s in corpus], [s.chars for s in corpus], dtype=dtype)
    result = TrainResult(params=params, config=config)
    step = start
    try:
        while step < schedule.total:
            idx = _batches(len(corpus), options.batch_size, options.seed, step)
            sub = [corpus[i] for i in idx]
            batch = full if len(idx) == len(corpus) else make_batch(
                [s.steps for s in sub], [s.audio for s in sub], [s.chars for s in sub], dtype=dtype)
            lr = schedule.lr(step)
            opt.zero_grad()
            value = sequence_loss(batch, params, config)
            loss_value = float(value.data)
            if not math.isfinite(loss_value):
                raise TrainingDiverged(step, last_ckpt)
            value.backward()
            opt.step(lr)
            step += 1
            result.losses.append((step, lr, loss_value))
            if log_fh:
                log_fh.write(f"{step},{lr:.8g},{loss_value:.8g}\n")
            if log and step % options.eval_every == 0:
                log(step, lr, loss_value)
            if options.out_dir and step % options.checkpoint_every == 0:
                last_ckpt = os.path.join(options.out_dir, f"ckpt_{step}.bin")
                write_checkpoint(last_ckpt, params, opt, config, schedule, options, step)
            if options.target_accuracy is not None and step % options.eval_every == 0:
                acc = field_accuracy(full, params, config)
                if min(acc.values()) >= options.target_accuracy:
                    break
    finally:
        if log_fh:
            log_fh.close()
    result.steps = step
    result.accuracy = field_accuracy(full, params, config)
    if options.out_dir:
        last_ckpt = os.path.join(options.out_dir, "last.bin")
        write_checkpoint(last_ckpt, params, opt, config, schedule, options, step)
    result.checkpoint = last_ckpt
    return result
