"""A small reverse-mode automatic differentiation engine over numpy arrays.

Each operation records its inputs and a closure that pushes the output
gradient back to them. ``backward`` walks the recorded graph in reverse
topological order.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=float, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(t):
            stack = [(t, False)]
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

        visit(self)
        self._accum(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # intermediate gradients are not needed after propagation
                    node.grad = None

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(as_tensor(o)))

    def __rsub__(self, o):
        return add(as_tensor(o), neg(self))

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_GRAD_ENABLED = [True]


@contextmanager
def no_grad():
    """Disable graph recording (inference only)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def _make(data, parents, backward):
    rg = _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=rg, _parents=parents if rg else (),
                  _backward=backward if rg else None)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear algebra

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def neg(a) -> Tensor:
    def bw(g):
        a._accum(-g)

    return _make(-a.data, (a,), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0] or b.data.ndim != 2:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            a2 = a.data.reshape(-1, a.shape[-1])
            b._accum(a2.T @ g.reshape(-1, g.shape[-1]))

    return _make(a.data @ b.data, (a, b), bw)


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    def bw(g):
        if axis is None:
            a._accum(np.broadcast_to(g, a.shape))
        else:
            a._accum(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _make(a.data.sum(axis=axis), (a,), bw)


def mean(a, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def exp(a) -> Tensor:
    out = np.exp(a.data)

    def bw(g):
        a._accum(g * out)

    return _make(out, (a,), bw)


def log(a) -> Tensor:
    def bw(g):
        a._accum(g / a.data)

    return _make(np.log(a.data), (a,), bw)


def square(a) -> Tensor:
    def bw(g):
        a._accum(2.0 * g * a.data)

    return _make(a.data * a.data, (a,), bw)


def reciprocal(a) -> Tensor:
    out = 1.0 / a.data

    def bw(g):
        a._accum(-g * out * out)

    return _make(out, (a,), bw)


# ---------------------------------------------------------------------------
# activations

def relu(a) -> Tensor:
    mask = a.data > 0

    def bw(g):
        a._accum(g * mask)

    return _make(a.data * mask, (a,), bw)


def sigmoid(a) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def bw(g):
        a._accum(g * out * (1.0 - out))

    return _make(out, (a,), bw)


def tanh(a) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        a._accum(g * (1.0 - out * out))

    return _make(out, (a,), bw)


def softsign(a) -> Tensor:
    """x / (1 + |x|)."""
    den = 1.0 + np.abs(a.data)

    def bw(g):
        a._accum(g / (den * den))

    return _make(a.data / den, (a,), bw)


def softplus(a) -> Tensor:
    x = a.data
    out = np.logaddexp(0.0, x)

    def bw(g):
        a._accum(g * 0.5 * (1.0 + np.tanh(0.5 * x)))

    return _make(out, (a,), bw)


def log_softmax(a, axis=-1) -> Tensor:
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m
    out = x - lse
    p = np.exp(out)

    def bw(g):
        a._accum(g - p * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), bw)


def softmax(a, axis=-1) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        a._accum(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (a,), bw)


def logsumexp(a, axis=-1) -> Tensor:
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(x - m)
    tot = s.sum(axis=axis, keepdims=True)
    out = np.log(tot) + m

    def bw(g):
        a._accum(np.expand_dims(g, axis) * s / tot)

    return _make(np.squeeze(out, axis=axis), (a,), bw)


# ---------------------------------------------------------------------------
# structural

def concat(ts, axis=-1) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    sizes = [t.shape[axis] for t in ts]
    ref = list(ts[0].shape)
    for t in ts:
        other = list(t.shape)
        if len(other) != len(ref) or any(o != r for i, (o, r) in enumerate(zip(other, ref))
                                          if i != axis % len(ref)):
            raise ShapeError(f"concat shape mismatch {[t.shape for t in ts]}")
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return _make(out, tuple(ts), bw)


def _basic(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int)) or p is Ellipsis for p in parts)


def getitem(a, idx) -> Tensor:
    basic = _basic(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        a._accum(full)

    return _make(a.data[idx], (a,), bw)


def reshape(a, shape) -> Tensor:
    def bw(g):
        a._accum(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), bw)


def pick(a, labels) -> Tensor:
    """a[i, labels[i]] for a 2-D tensor."""
    labels = np.asarray(labels, dtype=int)
    rows = np.arange(a.shape[0])

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, labels), g)
        a._accum(full)

    return _make(a.data[rows, labels], (a,), bw)


def dropout(a, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training."""
    if not training or rate <= 0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)
