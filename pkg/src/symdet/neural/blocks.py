"""Parameter storage and the network building blocks used by the detectors."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class ParamStore:
    """Named trainable tensors with a flat view for optimisers.

    Initial values are drawn from a generator seeded by ``seed``.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.params: OrderedDict[str, Tensor] = OrderedDict()

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=float), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def glorot(self, name, fan_in, fan_out, shape=None) -> Tensor:
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        shape = (fan_in, fan_out) if shape is None else shape
        return self.add(name, self.rng.uniform(-lim, lim, size=shape))

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.values())

    def __len__(self):
        return len(self.params)

    def names(self):
        return list(self.params)

    def size(self) -> int:
        return sum(p.data.size for p in self)

    def flat(self) -> np.ndarray:
        if not self.params:
            return np.zeros(0)
        return np.concatenate([p.data.ravel() for p in self])

    def set_flat(self, vec) -> None:
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.size():
            raise ShapeError(f"flat vector has {vec.size} entries, store holds {self.size()}")
        off = 0
        for p in self:
            n = p.data.size
            p.data = vec[off:off + n].reshape(p.data.shape).copy()
            off += n

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([(np.zeros_like(p.data) if p.grad is None else p.grad).ravel()
                               for p in self])

    def zero_grad(self):
        for p in self:
            p.grad = None

    def state(self) -> dict:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict) -> None:
        if set(state) != set(self.params):
            missing = set(self.params) ^ set(state)
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for k, v in state.items():
            v = np.asarray(v, dtype=float)
            if v.shape != self.params[k].data.shape:
                raise ShapeError(f"{k}: expected shape {self.params[k].data.shape}, got {v.shape}")
            self.params[k].data = v.copy()


ACTIVATIONS = {
    "relu": T.relu,
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
    "softsign": T.softsign,
    "softplus": T.softplus,
    "linear": lambda x: x,
}


class Dense:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int):
        self.name, self.n_in, self.n_out = name, n_in, n_out
        self.W = store.glorot(f"{name}.W", n_in, n_out)
        self.b = store.add(f"{name}.b", np.zeros(n_out))

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"{self.name}: expected input width {self.n_in}, got {x.shape[-1]}")
        return x @ self.W + self.b


class MLP:
    """Dense layers with the given activations between them (none after the last)."""

    def __init__(self, store: ParamStore, name: str, sizes, activations):
        if len(activations) != len(sizes) - 2:
            raise ValueError("need one activation per hidden layer")
        self.layers = [Dense(store, f"{name}.{i}", a, b) for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]
        self.activations = [ACTIVATIONS[a] for a in activations]
        self.sizes = list(sizes)

    def __call__(self, x) -> Tensor:
        h = x
        for layer, act in zip(self.layers[:-1], self.activations):
            h = act(layer(h))
        return self.layers[-1](h)


class LSTMCell:
    """Standard LSTM cell; gate order is input, forget, cell, output."""

    def __init__(self, store: ParamStore, name: str, n_in: int, hidden: int):
        self.name, self.n_in, self.hidden = name, n_in, hidden
        self.W = store.glorot(f"{name}.W", n_in + hidden, 4 * hidden)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        self.b = store.add(f"{name}.b", b)

    def __call__(self, x, state):
        h, c = state
        x = T.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"{self.name}: expected input width {self.n_in}, got {x.shape[-1]}")
        z = T.concat([x, h], axis=-1) @ self.W + self.b
        H = self.hidden
        i = T.sigmoid(z[..., :H])
        f = T.sigmoid(z[..., H:2 * H])
        g = T.tanh(z[..., 2 * H:3 * H])
        o = T.sigmoid(z[..., 3 * H:])
        c = f * c + i * g
        h = o * T.tanh(c)
        return h, c

    def zero_state(self, batch: int):
        z = Tensor(np.zeros((batch, self.hidden)))
        return z, z

    def run(self, xs, reverse: bool = False):
        """Hidden states for a list of per-step inputs, in input order."""
        state = self.zero_state(T.as_tensor(xs[0]).shape[0])
        steps = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
        out = [None] * len(xs)
        for t in steps:
            state = self(xs[t], state)
            out[t] = state[0]
        return out


def bidirectional_run(fwd: LSTMCell, bwd: LSTMCell, xs):
    """Per-step concatenation of forward-pass and reversed-pass hidden states."""
    hf = fwd.run(xs)
    hb = bwd.run(xs, reverse=True)
    return [T.concat([a, b], axis=-1) for a, b in zip(hf, hb)]


class MixtureHead:
    """Maps features to diagonal Gaussian mixture parameters.

    Returns log-weights (n, C), means (n, C, d) and variances (n, C, d).
    """

    def __init__(self, store: ParamStore, name: str, n_in: int, components: int, dim: int = 1):
        self.C, self.d = components, dim
        self.logits = Dense(store, f"{name}.logits", n_in, components)
        self.mu = Dense(store, f"{name}.mu", n_in, components * dim)
        self.var = Dense(store, f"{name}.var", n_in, components * dim)

    def __call__(self, x):
        n = T.as_tensor(x).shape[0]
        logw = T.log_softmax(self.logits(x), axis=-1)
        mu = T.reshape(self.mu(x), (n, self.C, self.d))
        var = T.reshape(T.softplus(self.var(x)), (n, self.C, self.d)) + 1e-6
        return logw, mu, var


def mixture_logpdf(logw, mu, var, y) -> Tensor:
    """log sum_k w_k N(y | mu_k, diag(var_k)) per row; ``y`` is (n, d)."""
    y = np.asarray(y, dtype=float)
    diff = T.as_tensor(y[:, None, :]) - mu
    quad = T.sum(T.square(diff) * T.reciprocal(var), axis=-1)
    logdet = T.sum(T.log(var), axis=-1)
    comp = logw + (-0.5) * (quad + logdet) - 0.5 * mu.shape[-1] * np.log(2 * np.pi)
    return T.logsumexp(comp, axis=-1)
