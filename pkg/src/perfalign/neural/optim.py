"""AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class Schedule:
    """Linear ramp from ``init_lr`` to ``peak_lr`` over ``warmup`` steps, then
    cosine decay to ``final_lr`` at ``total`` steps."""
    total: int = 3000
    warmup: int = 100
    init_lr: float = 1e-3
    peak_lr: float = 1e-2
    final_lr: float = 1e-5

    def lr(self, step: int) -> float:
        if step < self.warmup:
            return self.init_lr + (self.peak_lr - self.init_lr) * step / max(self.warmup, 1)
        span = max(self.total - self.warmup, 1)
        frac = min(1.0, (step - self.warmup) / span)
        return self.final_lr + 0.5 * (self.peak_lr - self.final_lr) * (1 + math.cos(math.pi * frac))

    def to_dict(self):
        return asdict(self)


def _decays(name: str) -> bool:
    # no decay on norms, biases and positional tables
    return not (name.endswith("_b") or name.endswith(".b") or ".ln_" in name or name.startswith("pos."))


class AdamW:
    def __init__(self, params: dict, betas=(0.9, 0.98), eps=1e-8, weight_decay=0.01, clip=1.0):
        self.params = params
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip = clip
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def grad_norm(self) -> float:
        return math.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum())
                             for p in self.params.values() if p.grad is not None))

    def step(self, lr: float) -> float:
        norm = self.grad_norm()
        scale = min(1.0, self.clip / (norm + 1e-12)) if self.clip else 1.0
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad * scale
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            update = (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            if self.weight_decay and _decays(k):
                p.data -= (lr * self.weight_decay) * p.data
            p.data -= (lr * update).astype(p.data.dtype)
        return norm

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
