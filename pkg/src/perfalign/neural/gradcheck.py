"""Finite-difference check of the reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Batch, ToyDecoderConfig, sequence_loss


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    n_checked: int
    per_group: dict  # parameter name -> max relative error among its checked entries

    def to_dict(self):
        return {"max_rel_error": self.max_rel_error, "worst_param": self.worst_param,
                "worst_index": list(self.worst_index), "n_checked": self.n_checked, "per_group": self.per_group}


def rel_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def grad_check(params: dict, sample: Batch, config: ToyDecoderConfig, epsilon: float = 1e-4,
               n_params: int = 200, seed: int = 0) -> GradCheckResult:
    """Central differences against backprop on randomly chosen parameter entries.

    At least one entry of every parameter tensor is included; the rest are
    drawn uniformly over all entries. Run with float64 parameters.
    """
    for p in params.values():
        p.zero_grad()
    sequence_loss(sample, params, config).backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}

    rng = np.random.default_rng(seed)
    names = list(params)
    picks = [(n, int(rng.integers(params[n].data.size))) for n in names]
    sizes = np.array([params[n].data.size for n in names], dtype=float)
    while len(picks) < n_params:
        n = names[int(rng.choice(len(names), p=sizes / sizes.sum()))]
        picks.append((n, int(rng.integers(params[n].data.size))))

    worst = (-1.0, "", ())
    per_group: dict = {}
    for name, flat in picks:
        arr = params[name].data
        idx = np.unravel_index(flat, arr.shape)
        orig = arr[idx]
        arr[idx] = orig + epsilon
        plus = float(sequence_loss(sample, params, config).data)
        arr[idx] = orig - epsilon
        minus = float(sequence_loss(sample, params, config).data)
        arr[idx] = orig
        numeric = (plus - minus) / (2 * epsilon)
        err = rel_error(float(analytic[name][idx]), numeric)
        per_group[name] = max(per_group.get(name, 0.0), err)
        if err > worst[0]:
            worst = (err, name, tuple(int(i) for i in idx))
    return GradCheckResult(worst[0], worst[1], worst[2], len(picks), per_group)
