"""Sliding bidirectional RNN detector.

A stack of bidirectional LSTM layers maps a window of B observations to a
PMF over the constellation at every position of the window. Block mode cuts
the sequence into disjoint windows; sliding mode runs every full window
position and averages, with equal weights, the PMFs that each symbol
receives from the windows covering it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..channels import BPSK, Constellation, Dataset
from ..neural import Dense, LSTMCell, ParamStore, TrainConfig, train
from ..neural import tensor as T


@dataclass
class SbrnnModel:
    B: int = 10
    layers: int = 3
    hidden: int = 100
    dropout: float = 0.1
    constellation: Constellation = BPSK
    seed: int = 0
    config: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    kind = "sbrnn"

    def __post_init__(self):
        if self.B < 1 or self.layers < 1 or self.hidden < 1:
            raise ValueError("window length, depth and width must be positive")
        self.store = ParamStore(self.seed)
        self.cells = []
        n_in = 1
        for l in range(self.layers):
            self.cells.append((LSTMCell(self.store, f"lstm.{l}.fwd", n_in, self.hidden),
                               LSTMCell(self.store, f"lstm.{l}.bwd", n_in, self.hidden)))
            n_in = 2 * self.hidden
        self.out = Dense(self.store, "out", n_in, self.constellation.M)

    @property
    def M(self):
        return self.constellation.M

    def logits(self, W, training: bool = False, rng=None):
        """Per-position logits for windows ``W`` of shape (n, B): list of B tensors (n, M)."""
        W = np.asarray(W, dtype=float)
        xs = [W[:, t:t + 1] for t in range(W.shape[1])]
        for fwd, bwd in self.cells:
            hf = fwd.run(xs)
            hb = bwd.run(xs, reverse=True)
            xs = [T.dropout(T.concat([a, b], axis=-1), self.dropout, rng, training)
                  for a, b in zip(hf, hb)]
        return [self.out(x) for x in xs]

    def window_pmfs(self, W, chunk: int = 2048) -> np.ndarray:
        """Inference PMFs, shape (n, B, M)."""
        W = np.atleast_2d(np.asarray(W, dtype=float))
        parts = []
        with T.no_grad():
            for a in range(0, len(W), chunk):
                lg = self.logits(W[a:a + chunk])
                parts.append(np.stack([T.softmax(z, axis=-1).data for z in lg], axis=1))
        return np.concatenate(parts)


def make_windows(y, B: int, stride: int | None = None):
    """Windows of one sequence, shape (n, B), with a validity mask.

    Starts are 0, stride, 2*stride, ...; a window running past the end is
    padded by repeating the last observation and its tail is masked out.
    """
    y = np.asarray(y, dtype=float).ravel()
    stride = B if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be positive")
    Tn = len(y)
    starts = list(range(0, max(Tn - B, 0) + 1, stride))
    if starts[-1] + B < Tn:
        starts.append(starts[-1] + stride)
    idx = np.asarray(starts)[:, None] + np.arange(B)[None, :]
    mask = idx < Tn
    return y[np.minimum(idx, Tn - 1)], mask, idx


def sbrnn_train(ds: Dataset, B: int = 10, config: TrainConfig | None = None, seed: int = 0,
                stride: int | None = None, layers: int = 3, hidden: int = 100,
                dropout: float = 0.1) -> SbrnnModel:
    """Train on windows cut from every block of an ISI dataset (disjoint by default)."""
    config = config or TrainConfig(seed=seed)
    if ds.kind != "isi":
        raise ValueError("SBRNN trains on ISI datasets")
    model = SbrnnModel(B, layers, hidden, dropout, ds.constellation, seed)
    Ws, Ms, Ls = [], [], []
    for yb, sb in zip(np.atleast_2d(ds.y), np.atleast_2d(ds.symbols)):
        W, mask, idx = make_windows(yb, B, stride)
        Ws.append(W)
        Ms.append(mask)
        Ls.append(np.asarray(sb)[np.minimum(idx, len(sb) - 1)])
    W, mask, labels = np.concatenate(Ws), np.concatenate(Ms).astype(float), np.concatenate(Ls)
    rng = np.random.default_rng([config.seed, 1])

    def loss(i):
        lg = model.logits(W[i], training=True, rng=rng)
        total = T.Tensor(0.0)
        for t, z in enumerate(lg):
            ll = T.pick(T.log_softmax(z, axis=-1), labels[i, t])
            total = total - T.sum(ll * mask[i, t])
        return total * (1.0 / len(i))

    model.trace = train(model.store, loss, len(W), config)
    model.config = {**config.to_dict(), "stride": stride}
    return model


def brnn_block_detect(model: SbrnnModel, y):
    """Disjoint windows; returns ``(pmfs (T, M), decisions (T,))``."""
    y = np.asarray(y, dtype=float).ravel()
    W, mask, idx = make_windows(y, model.B)
    P = model.window_pmfs(W)[mask]
    pmf = np.empty((len(y), model.M))
    pmf[idx[mask]] = P
    return pmf, np.argmax(pmf, axis=1)


def sliding_weights(Tn: int, B: int) -> np.ndarray:
    """Number of full windows covering each position (|K_i|)."""
    if Tn <= B:
        return np.ones(Tn)
    starts = np.arange(Tn - B + 1)
    cover = np.zeros(Tn)
    for t in range(B):
        cover[starts + t] += 1
    return cover


def sbrnn_detect(model: SbrnnModel, y):
    """Sliding detection; returns ``(pmfs (T, M), decisions (T,))``."""
    y = np.asarray(y, dtype=float).ravel()
    B, Tn = model.B, len(y)
    if Tn <= B:
        return brnn_block_detect(model, y)
    W, _, idx = make_windows(y, B, stride=1)
    P = model.window_pmfs(W)
    acc = np.zeros((Tn, model.M))
    for t in range(B):
        acc[idx[:, t]] += P[:, t]
    pmf = acc / sliding_weights(Tn, B)[:, None]
    return pmf, np.argmax(pmf, axis=1)
