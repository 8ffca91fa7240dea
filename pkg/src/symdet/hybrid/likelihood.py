"""Learned state likelihoods and the ViterbiNet / BCJRNet detectors.

A likelihood model maps an observation y to an estimate of log p(y | s) for
every trellis state s. The classification head learns the state posterior
P(s | y) and uses Bayes' rule with the marginal density of y set to one;
the mixture head learns p(y | s) directly as a diagonal Gaussian mixture.
Either way the Viterbi and BCJR recursions run unchanged on top.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import trellis
from ..channels import BPSK, Constellation, Dataset, FmChannel, fm_loglik_table
from ..neural import MLP, MixtureHead, ParamStore, TrainConfig, mixture_logpdf, nll_logits, train
from ..neural import tensor as T
from ..numkit import LOG_2PI, logsumexp

CLASSIFIER_HIDDEN = (100, 50)
CLASSIFIER_ACTS = ("sigmoid", "relu")


@dataclass
class LikelihoodModel:
    head: str
    L: int
    constellation: Constellation
    store: ParamStore
    arch: dict
    config: dict = field(default_factory=dict)
    kind: str = "viterbinet"
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self._build()

    @property
    def M(self):
        return self.constellation.M

    @property
    def S(self):
        return self.M ** self.L

    def _build(self):
        a = self.arch
        st = ParamStore(self.store.seed)
        if self.head == "classification":
            sizes = [a["n_in"], *a["hidden"], self.S]
            self.net = MLP(st, "clf", sizes, list(a["activations"]))
        elif self.head == "mdn":
            self.net = MLP(st, "mdn.body", [self.S, a["hidden"][0], a["hidden"][0]], ["relu"])
            self.mix = MixtureHead(st, "mdn.head", a["hidden"][0], a["components"], a["n_in"])
        else:
            raise ValueError(f"unknown likelihood head {self.head!r}")
        if len(self.store):
            st.load_state(self.store.state())
        self.store = st

    def log_posterior(self, y) -> np.ndarray:
        """Classification head: log P(s | y), shape (T, S)."""
        Y = np.asarray(y, dtype=float).reshape(-1, self.arch["n_in"])
        with T.no_grad():
            return T.log_softmax(self.net(Y), axis=-1).data

    def state_mixtures(self):
        with T.no_grad():
            h = T.relu(self.net(np.eye(self.S)))
            logw, mu, var = self.mix(h)
        return logw.data, mu.data, var.data


def classification_model(L: int, constellation: Constellation = BPSK, n_in: int = 1,
                         hidden=CLASSIFIER_HIDDEN, activations=CLASSIFIER_ACTS, seed: int = 0,
                         kind: str = "viterbinet") -> LikelihoodModel:
    arch = {"n_in": n_in, "hidden": list(hidden), "activations": list(activations)}
    return LikelihoodModel("classification", L, constellation, ParamStore(seed), arch, kind=kind)


def mdn_model(L: int, constellation: Constellation = BPSK, n_in: int = 1, hidden: int = 32,
              components: int = 2, seed: int = 0, kind: str = "viterbinet") -> LikelihoodModel:
    arch = {"n_in": n_in, "hidden": [hidden], "components": components}
    return LikelihoodModel("mdn", L, constellation, ParamStore(seed), arch, kind=kind)


def likelihood_train(ds: Dataset, L: int, head: str = "classification",
                     config: TrainConfig | None = None, seed: int = 0, kind: str = "viterbinet",
                     **arch) -> LikelihoodModel:
    """Fit a likelihood model to a labelled ISI dataset (state labels required)."""
    config = config or TrainConfig(seed=seed)
    y = np.asarray(ds.y, dtype=float).reshape(-1, 1)
    labels = np.asarray(ds.states).ravel()
    if head == "classification":
        model = classification_model(L, ds.constellation, seed=seed, kind=kind, **arch)

        def loss(idx):
            return nll_logits(model.net(y[idx]), labels[idx])
    else:
        model = mdn_model(L, ds.constellation, seed=seed, kind=kind, **arch)
        onehot = np.eye(model.S)

        def loss(idx):
            h = T.relu(model.net(onehot[labels[idx]]))
            logw, mu, var = model.mix(h)
            return -T.mean(mixture_logpdf(logw, mu, var, y[idx]))

    model.trace = train(model.store, loss, len(labels), config)
    model.config = config.to_dict()
    return model


def learned_loglik(model, y) -> np.ndarray:
    """Estimated log p(y_i | s) for every observation and state, shape (T, S).

    For the classification head this is log P(s | y) + L log M; the additive
    constant does not affect either trellis detector.
    """
    if isinstance(model, ExactPosterior):
        return model.log_posterior(y) + model.L * np.log(model.M)
    if model.head == "classification":
        return model.log_posterior(y) + model.L * np.log(model.M)
    logw, mu, var = model.state_mixtures()          # (S, C), (S, C, d), (S, C, d)
    Y = np.asarray(y, dtype=float).reshape(-1, model.arch["n_in"])
    d = Y[:, None, None, :] - mu[None]
    comp = logw[None] - 0.5 * ((d * d / var[None]).sum(-1) + np.log(var).sum(-1)[None]
                               + Y.shape[1] * LOG_2PI)
    return logsumexp(comp, axis=-1)


class ExactPosterior:
    """Drop-in for a trained classifier that returns the exact state posterior."""

    head = "classification"

    def __init__(self, ch: FmChannel):
        self.ch, self.L, self.constellation = ch, ch.L, ch.constellation

    @property
    def M(self):
        return self.constellation.M

    def log_posterior(self, y) -> np.ndarray:
        ll = fm_loglik_table(self.ch, y)
        return ll - logsumexp(ll, axis=1)[:, None]


def viterbinet_detect(model, y) -> np.ndarray:
    return trellis.viterbi(learned_loglik(model, y), y, model.L, model.constellation)


def bcjrnet_detect(model, y):
    """Returns ``(marginals, decisions)``."""
    return trellis.bcjr(learned_loglik(model, y), y, model.L, model.constellation)
