"""DetNet: projected gradient descent unfolded into Q trainable layers.

Layer q computes

    z_q = relu(W1_q (s_{q-1} - d1_q H^T y + d2_q H^T H s_{q-1}) + b1_q)
    s_q = softsign(W2_q z_q + b2_q)

with s_0 = 0. Vectors are rows here, so the weight matrices act on the right.
The step scalars start at -eta with eta = 1 / lambda_max(H^T H); with the
sign convention above that makes the first linear stage a descent step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..channels import Dataset
from ..mimo import default_step, sign_project
from ..neural import ParamStore, TrainConfig, train
from ..neural import tensor as T

PAPER_CONFIG = {"Q": 90, "hidden_factor": 8}


@dataclass
class DetNetParams:
    H: np.ndarray
    Q: int
    hidden: int
    store: ParamStore
    weights: str = "log"
    config: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    kind = "detnet"

    @property
    def K(self):
        return self.H.shape[1]

    def layer(self, q):
        st = self.store
        return (st[f"layer.{q}.W1"], st[f"layer.{q}.b1"], st[f"layer.{q}.W2"], st[f"layer.{q}.b2"],
                st[f"layer.{q}.d1"], st[f"layer.{q}.d2"])


def detnet_build(H, Q: int = 20, seed: int = 0, hidden: int | None = None,
                 weights: str = "log") -> DetNetParams:
    """Randomly initialised DetNet for channel ``H`` (hidden width defaults to 4K)."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    K = H.shape[1]
    hidden = 4 * K if hidden is None else int(hidden)
    if Q < 1 or hidden < 1:
        raise ValueError("Q and the hidden width must be positive")
    if weights not in ("log", "log1p"):
        raise ValueError(f"unknown loss weighting {weights!r}")
    eta = default_step(H)
    st = ParamStore(seed)
    for q in range(Q):
        st.glorot(f"layer.{q}.W1", K, hidden)
        st.add(f"layer.{q}.b1", np.zeros(hidden))
        st.glorot(f"layer.{q}.W2", hidden, K)
        st.add(f"layer.{q}.b2", np.zeros(K))
        st.add(f"layer.{q}.d1", np.array(-eta))
        st.add(f"layer.{q}.d2", np.array(-eta))
    return DetNetParams(H, Q, hidden, st, weights)


def paper_build(H, seed: int = 0) -> DetNetParams:
    """The large configuration (90 layers, hidden width 8K)."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    return detnet_build(H, PAPER_CONFIG["Q"], seed, PAPER_CONFIG["hidden_factor"] * H.shape[1])


def detnet_forward(params: DetNetParams, y, H=None):
    """List of the Q layer outputs, each a Tensor of shape (n, K)."""
    H = params.H if H is None else np.atleast_2d(np.asarray(H, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if Y.shape[1] != H.shape[0]:
        raise ValueError(f"observation width {Y.shape[1]} does not match H with {H.shape[0]} rows")
    HtY = T.Tensor(Y @ H)
    HtH = T.Tensor(H.T @ H)
    s = T.Tensor(np.zeros((Y.shape[0], H.shape[1])))
    out = []
    for q in range(params.Q):
        W1, b1, W2, b2, d1, d2 = params.layer(q)
        v = s - d1 * HtY + d2 * (s @ HtH)
        z = T.relu(v @ W1 + b1)
        s = T.softsign(z @ W2 + b2)
        out.append(s)
    return out


def detnet_detect(params: DetNetParams, y, H=None) -> np.ndarray:
    """BPSK values (+-1) from the sign of the last layer; zeros map to -1."""
    with T.no_grad():
        s = sign_project(detnet_forward(params, y, H)[-1].data)
    return s[0] if np.ndim(y) == 1 else s


def loss_weights(Q: int, mode: str = "log") -> np.ndarray:
    q = np.arange(1, Q + 1, dtype=float)
    return np.log(q) if mode == "log" else np.log(q + 1.0)


def detnet_loss(params: DetNetParams, Y, S) -> T.Tensor:
    """Mean over samples of sum_q w_q ||s - s_q||^2 with S in +-1 values."""
    w = loss_weights(params.Q, params.weights)
    outs = detnet_forward(params, Y)
    total = T.Tensor(0.0)
    for wq, sq in zip(w, outs):
        if wq != 0.0:
            total = total + wq * T.sum(T.square(sq - S))
    return total * (1.0 / len(S))


def detnet_train(ds: Dataset, H, Q: int = 20, config: TrainConfig | None = None, seed: int = 0,
                 hidden: int | None = None, weights: str = "log",
                 paper: bool = False) -> DetNetParams:
    """Fit DetNet to a BPSK MIMO dataset drawn with channel ``H``."""
    config = config or TrainConfig(seed=seed)
    if ds.constellation.M != 2:
        raise ValueError("DetNet supports BPSK only")
    if paper:
        params = paper_build(H, seed)
        params.weights = weights
    else:
        params = detnet_build(H, Q, seed, hidden, weights)
    Y = np.asarray(ds.y, dtype=float)
    S = ds.constellation.values[np.asarray(ds.symbols)]
    params.trace = train(params.store, lambda idx: detnet_loss(params, Y[idx], S[idx]), len(Y), config)
    params.config = config.to_dict()
    return params

