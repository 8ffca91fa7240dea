"""Sequence detection over finite-memory channels.

Detectors take a log-likelihood table ``ll`` of shape (T, M**L) holding
log p(y_i | s_i) for every state, or a callable mapping the observations to
such a table. States are indexed as in :mod:`symdet.channels`: the newest
symbol is the lowest base-M digit, and the block starts from the all-zero
pre-history state.
"""
from __future__ import annotations

import itertools

import numpy as np

from .channels import Constellation, state_labels, state_symbols

MAX_ENUMERATION = 2 ** 20


class TrellisError(ValueError):
    pass


def predecessors(M: int, L: int) -> np.ndarray:
    """(M**L, M) table; row u lists the states that can precede u.

    Column a is the predecessor whose oldest symbol (dropped by the shift) is a.
    """
    S = M ** L
    u = np.arange(S)
    return (u // M)[:, None] + (np.arange(M) * M ** (L - 1))[None, :]


def successors(M: int, L: int) -> np.ndarray:
    """(M**L, M) table; column a is the successor reached by new symbol a."""
    S = M ** L
    u = np.arange(S)
    return ((u * M) % S)[:, None] + np.arange(M)[None, :]


def is_shift(s_next: int, s_prev: int, M: int, L: int) -> bool:
    """True iff the first L-1 entries of ``s_next`` are the last L-1 of ``s_prev``."""
    return (s_prev * M) % (M ** L) == s_next - s_next % M


def function_node(loglik, y, s_next: int, s_prev: int, M: int, L: int) -> float:
    """f(y, s_next, s_prev) = p(y | s_next) / M on shift-consistent pairs, else 0.

    ``loglik(y, state)`` returns log p(y | state).
    """
    if not is_shift(s_next, s_prev, M, L):
        return 0.0
    return float(np.exp(loglik(y, s_next))) / M


def _table(loglik, y, S):
    ll = loglik(y) if callable(loglik) else loglik
    ll = np.asarray(ll, dtype=float)
    if ll.ndim != 2 or ll.shape[1] != S:
        raise TrellisError(f"log-likelihood table must have shape (T, {S}), got {ll.shape}")
    if np.isnan(ll).any():
        t = int(np.argwhere(np.isnan(ll))[0, 0])
        raise TrellisError(f"log-likelihood is NaN at index {t + 1}")
    return ll


def viterbi(loglik, y, L: int, constellation: Constellation, initial: str = "padded",
            return_cost: bool = False):
    """Sequence-ML estimate of the transmitted symbol indices.

    ``initial='padded'`` starts from the known pre-history state; ``'free'``
    sets every initial path cost to zero. Ties go to the lowest state index.
    """
    M = constellation.M
    S = M ** L
    ll = _table(loglik, y, S)
    T = ll.shape[0]
    if T < 1:
        raise TrellisError("empty block")
    pred = predecessors(M, L)
    cost = np.zeros(S)
    if initial == "padded":
        cost[1:] = np.inf
    elif initial != "free":
        raise ValueError(f"unknown initial policy {initial!r}")
    back = np.empty((T, S), dtype=np.int64)
    rows = np.arange(S)
    for i in range(T):
        cand = cost[pred]                       # (S, M)
        a = np.argmin(cand, axis=1)
        back[i] = pred[rows, a]
        cost = cand[rows, a] - ll[i]
    state = int(np.argmin(cost))
    best = float(cost[state])
    states = np.empty(T, dtype=np.int64)
    for i in range(T - 1, -1, -1):
        states[i] = state
        state = back[i, state]
    symbols = states % M
    if return_cost:
        return symbols, best
    return symbols


def bcjr(loglik, y, L: int, constellation: Constellation, return_messages: bool = False):
    """Symbol-wise MAP detection by forward/backward message passing.

    Returns ``(marginals, decisions)`` with marginals of shape (T, M). Each
    message vector is scaled to sum to one.
    """
    M = constellation.M
    S = M ** L
    ll = _table(loglik, y, S)
    T = ll.shape[0]
    if T < 1:
        raise TrellisError("empty block")
    peak = ll.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(peak)):
        t = int(np.argwhere(~np.isfinite(peak[:, 0]))[0, 0])
        raise TrellisError(f"all-zero forward message at index {t + 1} (no state has positive likelihood)")
    # likelihoods up to a per-index constant; f = lik / M on shift pairs
    lik = np.exp(ll - peak) / M
    pred = predecessors(M, L)
    succ = successors(M, L)

    fwd = np.empty((T + 1, S))
    fwd[0] = 0.0
    fwd[0, 0] = 1.0
    scale_f = np.empty(T)
    for i in range(T):
        m = lik[i] * fwd[i][pred].sum(axis=1)
        z = m.sum()
        if not z > 0:
            raise TrellisError(f"all-zero forward message at index {i + 1}")
        scale_f[i] = 1.0 / z
        fwd[i + 1] = m * scale_f[i]

    bwd = np.empty((T + 1, S))
    bwd[T] = 1.0 / S
    scale_b = np.empty(T)
    scale_b[T - 1] = 1.0
    for i in range(T - 1, 0, -1):
        # message into state at index i from function node i+1
        m = (lik[i][succ] * bwd[i + 1][succ]).sum(axis=1)
        z = m.sum()
        if not z > 0:
            raise TrellisError(f"all-zero backward message at index {i}")
        scale_b[i - 1] = 1.0 / z
        bwd[i] = m * scale_b[i - 1]

    joint = fwd[1:] * bwd[1:]                   # (T, S), index i holds state s_i
    marg = np.zeros((T, M))
    newest = np.arange(S) % M
    for a in range(M):
        marg[:, a] = joint[:, newest == a].sum(axis=1)
    tot = marg.sum(axis=1, keepdims=True)
    if np.any(tot <= 0):
        t = int(np.argwhere(tot[:, 0] <= 0)[0, 0])
        raise TrellisError(f"zero posterior mass at index {t + 1}")
    marg /= tot
    dec = np.argmax(marg, axis=1)
    if return_messages:
        return marg, dec, {"forward": fwd, "backward": bwd,
                           "forward_scale": scale_f, "backward_scale": scale_b}
    return marg, dec


# ---------------------------------------------------------------------------
# exhaustive oracles

def _all_sequences(M: int, T: int) -> np.ndarray:
    if M ** T > MAX_ENUMERATION:
        raise TrellisError(f"refusing to enumerate {M}**{T} sequences")
    return np.array(list(itertools.product(range(M), repeat=T)), dtype=np.int64).reshape(-1, T)


def sequence_logliks(ll: np.ndarray, M: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    """All M**T sequences and their joint log-likelihoods sum_i log p(y_i | s_i)."""
    T, S = ll.shape
    seqs = _all_sequences(M, T)
    padded = np.concatenate([np.zeros((len(seqs), L - 1), dtype=np.int64), seqs], axis=1)
    total = np.zeros(len(seqs))
    for i in range(T):
        window = padded[:, i:i + L]             # oldest first
        st = (window[:, ::-1] * (M ** np.arange(L))[None, :]).sum(axis=1)
        total += ll[i, st]
    return seqs, total


def bruteforce_seq_ml(loglik, y, L: int, constellation: Constellation, return_cost: bool = False):
    """Exhaustive sequence-ML; ties go to the lexicographically smallest sequence."""
    M = constellation.M
    ll = _table(loglik, y, M ** L)
    seqs, total = sequence_logliks(ll, M, L)
    best = int(np.argmax(total))
    if return_cost:
        return seqs[best], float(-total[best])
    return seqs[best]


def bruteforce_symbol_map(loglik, y, L: int, constellation: Constellation) -> np.ndarray:
    """Exhaustive per-index posteriors, shape (T, M)."""
    M = constellation.M
    ll = _table(loglik, y, M ** L)
    seqs, total = sequence_logliks(ll, M, L)
    w = np.exp(total - total.max())
    w /= w.sum()
    T = ll.shape[0]
    marg = np.zeros((T, M))
    for i in range(T):
        marg[i] = np.bincount(seqs[:, i], weights=w, minlength=M)
    return marg / marg.sum(axis=1, keepdims=True)


def path_cost(ll: np.ndarray, symbols, M: int, L: int) -> float:
    """sum_i -log p(y_i | s_i) along a given symbol sequence."""
    st = state_labels(np.asarray(symbols)[None, :], M, L)[0]
    return float(-ll[np.arange(len(st)), st].sum())


__all__ = [
    "TrellisError", "predecessors", "successors", "is_shift", "function_node", "viterbi",
    "bcjr", "bruteforce_seq_ml", "bruteforce_symbol_map", "path_cost", "state_symbols",
]
