"""A small numpy-backed tensor with reverse-mode differentiation.

Only the operations the decoder needs are provided. Fused kernels
(softmax, layer norm, SiLU, multi-field cross-entropy) carry hand-written
backward passes; ``neural.gradcheck`` verifies them by finite differences.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None
        self.name = name

    # -- bookkeeping ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar")
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- elementwise ------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other, self.dtype)
        out = self.data + other.data

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))
        return Tensor(out, parents=(self, other), backward=bw)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-_wrap(other, self.dtype))

    def __rsub__(self, other):
        return _wrap(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = _wrap(other, self.dtype)
        out = self.data * other.data

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))
        return Tensor(out, parents=(self, other), backward=bw)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        out = np.matmul(self.data, other.data)

        def bw(g):
            if self.requires_grad:
                gb = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(_unbroadcast(gb, self.shape))
            if other.requires_grad:
                if other.data.ndim == 2 and self.data.ndim > 2:
                    a2 = self.data.reshape(-1, self.shape[-1])
                    other._accumulate(a2.T @ g.reshape(-1, g.shape[-1]))
                else:
                    ga = np.matmul(np.swapaxes(self.data, -1, -2), g)
                    other._accumulate(_unbroadcast(ga, other.shape))
        return Tensor(out, parents=(self, other), backward=bw)

    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * out))

    def log(self):
        return Tensor(np.log(self.data), parents=(self,), backward=lambda g: self._accumulate(g / self.data))

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-self.data))
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * out * (1 - out)))

    def silu(self):
        s = 1.0 / (1.0 + np.exp(-self.data))
        out = self.data * s

        def bw(g):
            self._accumulate(g * (s * (1 + self.data * (1 - s))))
        return Tensor(out, parents=(self,), backward=bw)

    # -- shape ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))
        return Tensor(out, parents=(self,), backward=bw)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        out = self.data.reshape(*shape)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g.reshape(self.shape)))

    def transpose(self, *axes):
        out = self.data.transpose(*axes)
        inverse = np.argsort(axes)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g.transpose(*inverse)))

    def __getitem__(self, index):
        out = self.data[index]

        basic = not any(isinstance(i, (np.ndarray, list)) for i in (index if isinstance(index, tuple) else (index,)))

        def bw(g):
            full = np.zeros_like(self.data)
            if basic:
                full[index] = g
            else:
                np.add.at(full, index, g)
            self._accumulate(full)
        return Tensor(out, parents=(self,), backward=bw)

    # -- fused kernels ----------------------------------------------------

    def softmax(self, axis=-1):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def bw(g):
            self._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))
        return Tensor(out, parents=(self,), backward=bw)


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def parameter(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def concat(tensors, axis=0) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t._accumulate(part)
    return Tensor(out, parents=tuple(tensors), backward=bw)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    out = table.data[ids]

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accumulate(full)
    return Tensor(out, parents=(table,), backward=bw)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * weight.data + bias.data
    d = x.shape[-1]

    def bw(g):
        if weight.requires_grad:
            weight._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gx = g * weight.data
            x._accumulate(inv * (gx - gx.mean(axis=-1, keepdims=True)
                                 - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))
    return Tensor(out, parents=(x, weight, bias), backward=bw)


def multi_field_cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray, offsets, sizes,
                              normalizer: float) -> Tensor:
    """Sum over fields of masked cross-entropy, divided by ``normalizer``.

    ``logits`` is [..., sum(sizes)] with field f occupying
    ``offsets[f]:offsets[f]+sizes[f]``; ``targets`` and ``mask`` are [..., F].
    """
    data = logits.data
    grad = np.zeros_like(data)
    total = 0.0
    for f, (off, size) in enumerate(zip(offsets, sizes)):
        z = data[..., off:off + size]
        z = z - z.max(axis=-1, keepdims=True)
        logz = np.log(np.exp(z).sum(axis=-1, keepdims=True))
        logp = z - logz
        t = targets[..., f]
        m = mask[..., f].astype(data.dtype)
        picked = np.take_along_axis(logp, t[..., None], axis=-1)[..., 0]
        total -= float((picked * m).sum())
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, t[..., None], 1.0, axis=-1)
        grad[..., off:off + size] = (p - onehot) * m[..., None]
    value = np.asarray(total / normalizer, dtype=data.dtype)

    def bw(g):
        logits._accumulate(grad * (g / normalizer))
    return Tensor(value, parents=(logits,), backward=bw)
