"""Model-based flat-MIMO detection: iterative soft interference cancellation,
an exhaustive MAP oracle and plain projected gradient descent."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .channels import BPSK, Constellation, MimoChannel
from .numkit import NotPositiveDefiniteError, cholesky, poisson_logpmf, softmax

MAX_ENUMERATION = 2 ** 20


@dataclass(frozen=True)
class SicConfig:
    iterations: int = 5
    prior: str = "uniform"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.prior != "uniform":
            raise ValueError(f"unsupported prior policy {self.prior!r}")


def moments(p, constellation: Constellation):
    """Mean and variance of the constellation under PMF ``p`` (last axis)."""
    a = constellation.values
    p = np.asarray(p, dtype=float)
    e = p @ a
    v = p @ (a * a) - e * e
    # guard against tiny negative values from cancellation
    v = np.maximum(v, 0.0)
    if np.ndim(e) == 0:
        return float(e), float(v)
    return e, v


def cancel(y, H, k: int, means) -> np.ndarray:
    """z_k = y - sum_{l != k} h_l e_l."""
    H = np.asarray(H, dtype=float)
    e = np.array(means, dtype=float)
    e[..., k] = 0.0
    return np.asarray(y, dtype=float) - e @ H.T


def soft_decode(z, H, k: int, variances, noise_var: float, constellation: Constellation = BPSK):
    """PMF of user k from its interference-cancelled output.

    Residual interference plus noise is treated as Gaussian with covariance
    noise_var I + sum_{l != k} v_l h_l h_l^T.
    """
    if not noise_var > 0:
        raise ValueError("noise variance must be positive")
    H = np.asarray(H, dtype=float)
    v = np.array(variances, dtype=float)
    v[k] = 0.0
    cov = noise_var * np.eye(H.shape[0]) + (H * v) @ H.T
    Lc = cholesky(cov)
    hk = solve_triangular(Lc, H[:, k], lower=True)
    zw = solve_triangular(Lc, np.asarray(z, dtype=float), lower=True)
    a = constellation.values
    d = zw[None, :] - a[:, None] * hk[None, :]
    return softmax(-0.5 * (d * d).sum(axis=1))


def _soft_decode_batch(Z, H, k, V, noise_var, constellation):
    # Z: (n, N), V: (n, K)
    n, N = Z.shape
    V = V.copy()
    V[:, k] = 0.0
    cov = noise_var * np.eye(N)[None] + np.einsum("nk,ik,jk->nij", V, H, H)
    try:
        Lc = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from None
    rhs = np.stack([np.broadcast_to(H[:, k], Z.shape), Z], axis=-1)
    sol = np.linalg.solve(Lc, rhs)               # whitened h_k and z_k
    hk, zw = sol[..., 0], sol[..., 1]
    a = constellation.values
    d = zw[:, None, :] - a[None, :, None] * hk[:, None, :]
    return softmax(-0.5 * (d * d).sum(axis=2), axis=1)


def iterative_sic(y, H, noise_var: float, config: SicConfig = SicConfig(),
                  constellation: Constellation = BPSK):
    """Iterative soft interference cancellation for one observation vector.

    All users are updated in parallel from the previous iteration's PMFs.
    Returns ``(history, decisions)``; ``history`` has ``Q + 1`` arrays of
    shape (K, M), the first being the uniform prior.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    K, M = H.shape[1], constellation.M
    p = np.full((K, M), 1.0 / M)
    history = [p]
    for _ in range(config.iterations):
        e, v = moments(p, constellation)
        new = np.empty_like(p)
        for k in range(K):
            z = cancel(y, H, k, e)
            new[k] = soft_decode(z, H, k, v, noise_var, constellation)
        p = new
        history.append(p)
    return history, np.argmax(p, axis=1)


def iterative_sic_batch(Y, H, noise_var: float, config: SicConfig = SicConfig(),
                        constellation: Constellation = BPSK):
    """Vectorised :func:`iterative_sic` over the rows of ``Y`` (n, N).

    Returns ``(final_pmfs (n, K, M), decisions (n, K))``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    H = np.asarray(H, dtype=float)
    n, K, M = Y.shape[0], H.shape[1], constellation.M
    p = np.full((n, K, M), 1.0 / M)
    for _ in range(config.iterations):
        e, v = moments(p, constellation)
        new = np.empty_like(p)
        for k in range(K):
            Z = cancel(Y, H, k, e)
            new[:, k] = _soft_decode_batch(Z, H, k, v, noise_var, constellation)
        p = new
    return p, np.argmax(p, axis=2)


def _enumerate(K: int, M: int) -> np.ndarray:
    if M ** K > MAX_ENUMERATION:
        raise ValueError(f"refusing to enumerate {M}**{K} symbol vectors")
    return np.array(list(itertools.product(range(M), repeat=K)), dtype=np.int64)[:, ::-1]


def mimo_map_bruteforce(Y, ch: MimoChannel):
    """Exact MAP detection by enumerating all M**K symbol vectors.

    ``Y`` may be a single vector (N,) or a batch (n, N). Returns
    ``(decisions, marginals)`` with marginals of shape (..., K, M).
    """
    Y = np.asarray(Y, dtype=float)
    one = Y.ndim == 1
    Y = np.atleast_2d(Y)
    idx = _enumerate(ch.K, ch.M)                 # (C, K), user 1 is the fastest digit
    sv = ch.constellation.values[idx]
    if ch.kind == "gaussian":
        mean = sv @ ch.H.T                       # (C, N)
        d2 = ((Y[:, None, :] - mean[None]) ** 2).sum(axis=2)
        logp = -0.5 * d2 / ch.noise_var
    else:
        lam = ch.rates(sv)
        logp = np.stack([poisson_logpmf(np.broadcast_to(y, lam.shape), lam).sum(axis=1) for y in Y])
    w = softmax(logp, axis=1)                    # (n, C)
    marg = np.zeros((Y.shape[0], ch.K, ch.M))
    for k in range(ch.K):
        for a in range(ch.M):
            marg[:, k, a] = w[:, idx[:, k] == a].sum(axis=1)
    dec = np.argmax(marg, axis=2)
    if one:
        return dec[0], marg[0]
    return dec, marg


def sign_project(x):
    """BPSK projection; exact zeros map to -1 (lowest symbol)."""
    return np.where(np.asarray(x) > 0, 1.0, -1.0)


def default_step(H) -> float:
    H = np.asarray(H, dtype=float)
    return float(1.0 / np.linalg.eigvalsh(H.T @ H).max())


def projected_gradient_detect(y, H, step=None, iterations: int = 20, s0=None):
    """Projected gradient descent on ||y - H s||^2 over {-1, +1}^K.

    s_{q+1} = sign(s_q - eta_q H^T (H s_q - y)). ``step`` may be a scalar or a
    sequence of per-iteration step sizes; ``y`` may be batched (n, N).
    Returns BPSK values (+-1).
    """
    H = np.asarray(H, dtype=float)
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    K = H.shape[1]
    steps = np.broadcast_to(default_step(H) if step is None else step, (iterations,))
    s = np.zeros((Y.shape[0], K)) if s0 is None else np.broadcast_to(np.asarray(s0, float), (Y.shape[0], K))
    HtY = Y @ H
    HtH = H.T @ H
    for q in range(iterations):
        s = sign_project(s - steps[q] * (s @ HtH - HtY))
    return s[0] if np.ndim(y) == 1 else s
