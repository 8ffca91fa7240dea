"""DeepSIC: iterative soft interference cancellation with learned building blocks.

Block (k, q) is a small classifier that receives the channel output together
with the soft estimates of the other users from iteration q - 1 and returns
a PMF over the constellation for user k. Each interfering user contributes
its first M - 1 probabilities (the last one is redundant).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..channels import BPSK, Constellation, Dataset
from ..neural import MLP, ParamStore, TrainConfig, nll_logits, train
from ..neural import tensor as T

ARCHS = {
    "e2e": {"hidden": [60], "activations": ["relu"]},
    "seq": {"hidden": [100, 50], "activations": ["sigmoid", "relu"]},
}


@dataclass
class DeepSicNet:
    N: int
    K: int
    Q: int
    constellation: Constellation = BPSK
    arch: dict = field(default_factory=lambda: dict(ARCHS["e2e"]))
    seed: int = 0
    config: dict = field(default_factory=dict)
    training: str = "e2e"
    trace: list = field(default_factory=list)
    kind = "deepsic"

    def __post_init__(self):
        self.store = ParamStore(self.seed)
        n_in = self.input_width
        self.blocks = [[MLP(self.store, f"block.{k}.{q}", [n_in, *self.arch["hidden"], self.M],
                            self.arch["activations"]) for q in range(self.Q)] for k in range(self.K)]

    @property
    def M(self):
        return self.constellation.M

    @property
    def input_width(self):
        return self.N + (self.K - 1) * (self.M - 1)

    def block_params(self, k, q):
        prefix = f"block.{k}.{q}."
        return [n for n in self.store.names() if n.startswith(prefix)]

    def block_input(self, Y, P, k):
        """Channel output concatenated with the other users' soft estimates.

        ``P`` is a list of K arrays/tensors of shape (n, M).
        """
        parts = [T.as_tensor(Y)] + [T.as_tensor(P[l])[:, :self.M - 1] for l in range(self.K) if l != k]
        return T.concat(parts, axis=-1)

    def forward(self, Y):
        """Soft estimates per iteration: list of Q + 1 lists of K tensors (n, M)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        n = Y.shape[0]
        P = [T.Tensor(np.full((n, self.M), 1.0 / self.M)) for _ in range(self.K)]
        hist = [P]
        logits = None
        for q in range(self.Q):
            logits = [self.blocks[k][q](self.block_input(Y, P, k)) for k in range(self.K)]
            P = [T.softmax(z, axis=-1) for z in logits]
            hist.append(P)
        return hist, logits


def deepsic_train_e2e(ds: Dataset, Q: int = 5, config: TrainConfig | None = None, seed: int = 0,
                      arch: dict | None = None) -> DeepSicNet:
    """Joint training of all K*Q blocks on the sum cross entropy of the last iteration."""
    config = config or TrainConfig(seed=seed)
    Y, S = np.asarray(ds.y, dtype=float), np.asarray(ds.symbols)
    net = DeepSicNet(Y.shape[1], S.shape[1], Q, ds.constellation, dict(arch or ARCHS["e2e"]), seed,
                     training="e2e")

    def loss(idx):
        _, logits = net.forward(Y[idx])
        total = nll_logits(logits[0], S[idx, 0])
        for k in range(1, net.K):
            total = total + nll_logits(logits[k], S[idx, k])
        return total

    net.trace = train(net.store, loss, len(Y), config)
    net.config = config.to_dict()
    return net


def soft_outputs(net: DeepSicNet, Y, P, q):
    """Numpy PMFs of every user at iteration q + 1 given previous PMFs ``P`` (K, n, M)."""
    with T.no_grad():
        return np.stack([T.softmax(net.blocks[k][q](net.block_input(Y, P, k)), axis=-1).data
                         for k in range(net.K)])


def deepsic_train_seq(ds: Dataset, Q: int = 5, config: TrainConfig | None = None, seed: int = 0,
                      arch: dict | None = None, record=None) -> DeepSicNet:
    """Iteration-by-iteration training.

    Blocks of iteration q are trained with the soft estimates that the
    already-trained iterations produce on the same training inputs.
    ``record``, if given, is called as ``record(q, k, P_prev)`` before each
    block is trained.
    """
    config = config or TrainConfig(seed=seed)
    Y, S = np.asarray(ds.y, dtype=float), np.asarray(ds.symbols)
    net = DeepSicNet(Y.shape[1], S.shape[1], Q, ds.constellation, dict(arch or ARCHS["seq"]), seed,
                     training="seq")
    n = len(Y)
    P = np.full((net.K, n, net.M), 1.0 / net.M)
    traces = []
    for q in range(Q):
        for k in range(net.K):
            if record is not None:
                record(q, k, P)
            inp = net.block_input(Y, P, k).data
            block, lab = net.blocks[k][q], S[:, k]
            cfg = TrainConfig(**{**config.to_dict(), "seed": config.seed + 1000 * q + k})
            traces.append(train(net.store, lambda idx: nll_logits(block(inp[idx]), lab[idx]), n, cfg,
                                params=net.block_params(k, q)))
        P = soft_outputs(net, Y, P, q)
    net.trace = [float(np.mean([tr[e] for tr in traces])) for e in range(config.epochs)]
    net.config = config.to_dict()
    return net


def deepsic_detect(net: DeepSicNet, Y):
    """Hard decisions (n, K) and the soft-estimate history (Q + 1 arrays (n, K, M))."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    with T.no_grad():
        hist, _ = net.forward(Y)
    history = [np.stack([p.data for p in P], axis=1) for P in hist]
    return np.argmax(history[-1], axis=2), history
