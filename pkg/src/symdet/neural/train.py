"""Losses, the Adam optimiser and the mini-batch training loop."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .blocks import ParamStore

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch = epoch, batch


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 100
    seed: int = 0
    clip: float = 5.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.lr < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning rate, batch size and epochs must be nonnegative")

    def to_dict(self):
        return asdict(self)


def cross_entropy(p, label: int) -> float:
    """-log p[label]; probabilities below 1e-300 are clamped with a warning."""
    v = float(np.asarray(p, dtype=float)[label])
    if v < PROB_FLOOR:
        warnings.warn(f"probability {v!r} clamped to {PROB_FLOOR} in cross entropy", RuntimeWarning)
        v = PROB_FLOOR
    return -math.log(v)


def nll_logits(logits: T.Tensor, labels) -> T.Tensor:
    """Mean cross entropy of softmax(logits) against integer labels."""
    return -T.mean(T.pick(T.log_softmax(logits, axis=-1), labels))


def mdn_nll(logw, mu, var, y) -> float:
    """-log sum_k w_k N(y | mu_k, diag(var_k)) for a single mixture (numpy inputs)."""
    logw = np.asarray(logw, dtype=float)
    mu = np.atleast_2d(np.asarray(mu, dtype=float))
    var = np.atleast_2d(np.asarray(var, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if mu.shape[0] != logw.size:
        mu, var = mu.T, var.T
    comp = logw - 0.5 * (((y[None, :] - mu) ** 2 / var).sum(axis=1) + np.log(var).sum(axis=1)
                         + y.size * math.log(2 * math.pi))
    m = comp.max()
    return float(-(m + math.log(np.exp(comp - m).sum())))


class Adam:
    def __init__(self, store: ParamStore, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.store, self.lr, self.b1, self.b2, self.eps = store, lr, beta1, beta2, eps
        self.wd = weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in store.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in store.params.items()}
        self.t = 0

    def step(self, scale: float = 1.0):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.store.params.items():
            g = np.zeros_like(p.data) if p.grad is None else p.grad * scale
            if self.wd:
                g = g + self.wd * p.data
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def global_norm(store: ParamStore) -> float:
    return math.sqrt(sum(float((p.grad ** 2).sum()) for p in store if p.grad is not None))


def train(store: ParamStore, loss_fn, n: int, config: TrainConfig, params=None):
    """Mini-batch training.

    ``loss_fn(idx)`` returns a scalar Tensor for the samples ``idx``. Only the
    parameters in ``params`` (default: the whole store) are updated.
    Returns the per-epoch mean loss.
    """
    if n < 1:
        raise ValueError("empty training set")
    target = store
    if params is not None:
        target = ParamStore(store.seed)
        for name in params:
            target.params[name] = store[name]
    opt = Adam(target, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    trace = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            store.zero_grad()
            loss = loss_fn(idx)
            val = float(loss.data)
            if not math.isfinite(val):
                raise TrainingDiverged(epoch, b, val)
            if loss.requires_grad:
                loss.backward()
            scale = 1.0
            if config.clip:
                gn = global_norm(target)
                if not math.isfinite(gn):
                    raise TrainingDiverged(epoch, b, gn)
                if gn > config.clip:
                    scale = config.clip / gn
            opt.step(scale)
            total += val * len(idx)
        trace.append(total / n)
        log.debug("epoch %d loss %.6f", epoch, trace[-1])
    store.zero_grad()
    return trace
