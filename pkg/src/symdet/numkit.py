"""Numerical primitives shared by the detectors.

Matrices are plain float64 numpy arrays. Random streams are numpy
``Generator`` objects keyed by ``(seed, stream_id)`` so that every Monte
Carlo trial owns an independent, reproducible stream.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, xlogy

LOG_2PI = math.log(2.0 * math.pi)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent generator for the pair ``(seed, stream_id)``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(stream_id) & (2**64 - 1)])
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(*keys) -> int:
    """Stable 64-bit seed from an arbitrary tuple of keys.

    Uses blake2b over the repr of the keys, so it does not depend on
    Python's per-process hash randomisation.
    """
    h = hashlib.blake2b(repr(tuple(keys)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    try:
        Lc = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"matrix is not positive definite: {exc}") from None
    if not np.all(np.isfinite(Lc)) or np.any(np.diag(Lc) <= 0):
        raise NotPositiveDefiniteError("matrix is not positive definite")
    return Lc


def solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Raises ``NotPositiveDefiniteError`` instead of returning NaNs.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, b is {b.shape}")
    Lc = cholesky(A)
    z = solve_triangular(Lc, b, lower=True)
    return solve_triangular(Lc.T, z, lower=False)


def gaussian_logpdf(y, mean, cov) -> float:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not (y.shape == mean.shape and cov.shape == (len(y), len(y))):
        raise ValueError("inconsistent dimensions")
    Lc = cholesky(cov)
    z = solve_triangular(Lc, y - mean, lower=True)
    logdet = 2.0 * np.log(np.diag(Lc)).sum()
    return float(-0.5 * (z @ z) - 0.5 * logdet - 0.5 * len(y) * LOG_2PI)


def poisson_logpmf(y, lam):
    """``y log(lam) - lam - log(y!)``; vectorised over numpy inputs."""
    lam = np.asarray(lam, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("Poisson rate must be positive")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("Poisson observation must be a nonnegative integer")
    out = xlogy(y, lam) - lam - gammaln(y + 1.0)
    return float(out) if out.ndim == 0 else out


def logsumexp(v, axis=None):
    v = np.asarray(v, dtype=float)
    m = np.max(v, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(v - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmax(v, axis=-1):
    v = np.asarray(v, dtype=float)
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)
