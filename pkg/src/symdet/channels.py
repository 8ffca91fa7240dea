"""Channel models: finite-memory ISI channels and flat MIMO channels.

Symbols are handled as integer indices into a :class:`Constellation`;
``constellation.points[idx]`` gives the transmitted real value. Symbols at
time indices <= 0 (the pre-history of a block) are fixed to index 0, i.e.
the first constellation point. Simulators, state labels and the trellis
detectors all use this convention.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .numkit import gaussian_logpdf, poisson_logpmf, LOG_2PI


@dataclass(frozen=True)
class Constellation:
    points: tuple

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        if len(pts) < 2:
            raise ValueError("constellation needs at least two points")
        if len(set(pts)) != len(pts):
            raise ValueError("constellation points must be distinct")
        object.__setattr__(self, "points", pts)

    @property
    def M(self) -> int:
        return len(self.points)

    @property
    def values(self) -> np.ndarray:
        return np.array(self.points)

    def index_of(self, symbols) -> np.ndarray:
        symbols = np.asarray(symbols, dtype=float)
        match = symbols[..., None] == self.values
        if not np.all(match.any(axis=-1)):
            raise ValueError("symbols not in constellation")
        return match.argmax(axis=-1)


BPSK = Constellation((-1.0, 1.0))
OOK = Constellation((0.0, 1.0))


def db_to_linear(db) -> float:
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


# ---------------------------------------------------------------------------
# trellis state helpers

def n_states(M: int, L: int) -> int:
    return M ** L


def state_symbols(M: int, L: int) -> np.ndarray:
    """Table of shape (M**L, L); column j holds the index of s_{i-j}.

    The newest symbol is the lowest base-M digit of the state index.
    """
    S = M ** L
    u = np.arange(S)
    return np.stack([(u // M ** j) % M for j in range(L)], axis=1)


def state_from_symbols(window, M: int) -> int:
    """Index of the state ``[s_{i-L+1}, ..., s_i]`` (oldest first)."""
    idx = 0
    for j, s in enumerate(reversed(list(window))):
        idx += int(s) * M ** j
    return idx


def state_labels(symbols: np.ndarray, M: int, L: int) -> np.ndarray:
    """Per-position state indices for a block (or batch of blocks) of symbol indices."""
    symbols = np.atleast_2d(np.asarray(symbols, dtype=int))
    n, T = symbols.shape
    padded = np.concatenate([np.zeros((n, L - 1), dtype=int), symbols], axis=1)
    out = np.zeros((n, T), dtype=int)
    for j in range(L):
        # s_{i-j} sits at padded column i + L - 1 - j
        out += padded[:, L - 1 - j:L - 1 - j + T] * M ** j
    return out


# ---------------------------------------------------------------------------
# finite-memory channels

def exp_decay_taps(L: int, gamma: float) -> np.ndarray:
    if L < 1:
        raise ValueError("memory must be at least 1")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return np.exp(-gamma * np.arange(L))


def read_taps(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    taps = np.array([float(ln) for ln in lines if ln])
    if taps.size == 0:
        raise ValueError(f"no taps in {path}")
    return taps


def write_taps(path, taps) -> None:
    Path(path).write_text("".join(f"{float(t)!r}\n" for t in taps))


@dataclass(frozen=True)
class FmChannel:
    """Finite-memory SISO channel.

    ``kind='awgn'``: y_i = sqrt(rho) * sum_tau h_tau s_{i-tau+1} + w_i, w ~ N(0, 1).
    ``kind='poisson'``: y_i ~ Poisson(sqrt(rho) * sum_tau h_tau s_{i-tau+1} + 1).
    """
    kind: str
    taps: np.ndarray
    rho: float
    constellation: Constellation = BPSK

    def __post_init__(self):
        if self.kind not in ("awgn", "poisson"):
            raise ValueError(f"unknown finite-memory channel kind {self.kind!r}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        object.__setattr__(self, "taps", np.asarray(self.taps, dtype=float).ravel())
        if self.taps.size < 1:
            raise ValueError("need at least one tap")

    @property
    def L(self) -> int:
        return self.taps.size

    @property
    def M(self) -> int:
        return self.constellation.M

    def with_taps(self, taps) -> "FmChannel":
        return replace(self, taps=np.asarray(taps, dtype=float))

    def state_means(self) -> np.ndarray:
        """Noiseless signal term sqrt(rho) * h . s for every trellis state."""
        sym = self.constellation.values[state_symbols(self.M, self.L)]
        return np.sqrt(self.rho) * sym @ self.taps

    def state_rates(self) -> np.ndarray:
        return self.state_means() + 1.0


def _signal(ch: FmChannel, symbols: np.ndarray) -> np.ndarray:
    symbols = np.atleast_2d(symbols)
    n, T = symbols.shape
    vals = ch.constellation.values[symbols]
    pad = np.full((n, ch.L - 1), ch.constellation.points[0])
    x = np.concatenate([pad, vals], axis=1)
    out = np.zeros((n, T))
    for tau in range(ch.L):
        out += ch.taps[tau] * x[:, ch.L - 1 - tau:ch.L - 1 - tau + T]
    return np.sqrt(ch.rho) * out


def fm_sample(ch: FmChannel, symbols, rng: np.random.Generator, noiseless: bool = False) -> np.ndarray:
    """Channel outputs for a block (T,) or batch of blocks (n, T) of symbol indices."""
    symbols = np.asarray(symbols, dtype=int)
    one_d = symbols.ndim == 1
    mean = _signal(ch, symbols)
    if ch.kind == "awgn":
        y = mean if noiseless else mean + rng.standard_normal(mean.shape)
    else:
        lam = mean + 1.0
        if np.any(lam <= 0):
            raise ValueError("Poisson rate must be positive; use an OOK-type constellation")
        y = lam if noiseless else rng.poisson(lam).astype(float)
    return y[0] if one_d else y


def fm_loglik(ch: FmChannel, y: float, state: int) -> float:
    """Exact log p(y | state) for a single observation."""
    if ch.kind == "awgn":
        return gaussian_logpdf([y], [ch.state_means()[state]], [[1.0]])
    return poisson_logpmf(y, ch.state_rates()[state])


def fm_loglik_table(ch: FmChannel, y) -> np.ndarray:
    """log p(y_i | s) for every observation i and every state s; shape (T, M**L)."""
    y = np.asarray(y, dtype=float).ravel()[:, None]
    if ch.kind == "awgn":
        d = y - ch.state_means()[None, :]
        return -0.5 * d * d - 0.5 * LOG_2PI
    lam = ch.state_rates()
    if np.any(lam <= 0):
        raise ValueError("Poisson rate must be positive; use an OOK-type constellation")
    return poisson_logpmf(np.broadcast_to(y, (y.shape[0], lam.size)), lam[None, :])


def perturb_taps(taps, err_var: float, rng: np.random.Generator) -> np.ndarray:
    taps = np.asarray(taps, dtype=float)
    if err_var < 0:
        raise ValueError("error variance must be nonnegative")
    if err_var == 0:
        return taps.copy()
    return taps + np.sqrt(err_var) * rng.standard_normal(taps.shape)


# ---------------------------------------------------------------------------
# flat MIMO channels

def build_spatial_H(N: int, K: int) -> np.ndarray:
    i = np.arange(N)[:, None]
    k = np.arange(K)[None, :]
    return np.exp(-np.abs(i - k).astype(float))


@dataclass(frozen=True)
class MimoChannel:
    """Flat MIMO channel.

    ``kind='gaussian'``: y = H s + w, w ~ N(0, noise_var I).
    ``kind='poisson'``: y_j ~ Poisson((H s)_j / sqrt(noise_var) + 1).
    """
    kind: str
    H: np.ndarray
    noise_var: float
    constellation: Constellation = BPSK

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson"):
            raise ValueError(f"unknown MIMO channel kind {self.kind!r}")
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")
        object.__setattr__(self, "H", np.atleast_2d(np.asarray(self.H, dtype=float)))

    @property
    def N(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]

    @property
    def M(self) -> int:
        return self.constellation.M

    def with_H(self, H) -> "MimoChannel":
        return replace(self, H=np.asarray(H, dtype=float))

    def rates(self, s_values: np.ndarray) -> np.ndarray:
        lam = s_values @ self.H.T / np.sqrt(self.noise_var) + 1.0
        if np.any(lam <= 0):
            raise ValueError("Poisson rate must be positive; use an OOK-type constellation")
        return lam


def snr_to_noise_var(snr_db: float) -> float:
    """MIMO SNR is defined as 1 / noise_var."""
    return float(1.0 / db_to_linear(snr_db))


def mimo_sample(ch: MimoChannel, s, rng: np.random.Generator, noiseless: bool = False) -> np.ndarray:
    """Outputs for a symbol-index vector (K,) or batch (n, K)."""
    s = np.asarray(s, dtype=int)
    one_d = s.ndim == 1
    sv = ch.constellation.values[np.atleast_2d(s)]
    if ch.kind == "gaussian":
        y = sv @ ch.H.T
        if not noiseless:
            y = y + np.sqrt(ch.noise_var) * rng.standard_normal(y.shape)
    else:
        lam = ch.rates(sv)
        y = lam if noiseless else rng.poisson(lam).astype(float)
    return y[0] if one_d else y


def perturb_H(H, err_var: float, rng: np.random.Generator) -> np.ndarray:
    """Entry (i, k) receives additive N(0, err_var * |H_ik|) noise."""
    H = np.asarray(H, dtype=float)
    if err_var < 0:
        raise ValueError("error variance must be nonnegative")
    if err_var == 0:
        return H.copy()
    return H + np.sqrt(err_var * np.abs(H)) * rng.standard_normal(H.shape)


def perturbed_channel(ch, err_var: float, rng: np.random.Generator):
    """Copy of ``ch`` with noisy taps or H, as seen by a receiver with imperfect CSI.

    Poisson channels need nonnegative parameters for positive rates, so
    their perturbed taps/entries are clipped at zero.
    """
    if isinstance(ch, FmChannel):
        taps = perturb_taps(ch.taps, err_var, rng)
        return ch.with_taps(np.maximum(taps, 0.0) if ch.kind == "poisson" else taps)
    H = perturb_H(ch.H, err_var, rng)
    return ch.with_H(np.maximum(H, 0.0) if ch.kind == "poisson" else H)


# ---------------------------------------------------------------------------
# labelled datasets

@dataclass
class Dataset:
    """Labelled symbols and observations.

    ISI channels: ``symbols`` and ``y`` have shape (n_blocks, T) and
    ``states`` holds per-position trellis state indices.
    MIMO channels: ``symbols`` is (n, K), ``y`` is (n, N), ``states`` holds the
    joint index of each symbol vector (user 1 in the lowest digit).
    """
    kind: str
    symbols: np.ndarray
    y: np.ndarray
    states: np.ndarray
    constellation: Constellation = BPSK
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.symbols.size if self.kind == "isi" else self.symbols.shape[0]


def _joint_index(s: np.ndarray, M: int) -> np.ndarray:
    return (s * (M ** np.arange(s.shape[1]))[None, :]).sum(axis=1)


def gen_dataset(ch, blocklen: int, n_blocks: int, rng: np.random.Generator,
                csi_error: float = 0.0) -> Dataset:
    """Uniform i.i.d. symbols pushed through ``ch``.

    With ``csi_error > 0`` every block is generated by an independently
    perturbed copy of the channel (taps or H), which is how training data
    under CSI uncertainty is produced.
    For MIMO channels a block is ``blocklen`` consecutive channel uses.
    """
    if blocklen < 1 or n_blocks < 1:
        raise ValueError("blocklen and n_blocks must be positive")
    M = ch.constellation.M
    if isinstance(ch, FmChannel):
        symbols = rng.integers(0, M, size=(n_blocks, blocklen))
        if csi_error > 0:
            y = np.stack([fm_sample(perturbed_channel(ch, csi_error, rng), symbols[b], rng)
                          for b in range(n_blocks)])
        else:
            y = fm_sample(ch, symbols, rng)
        return Dataset("isi", symbols, y, state_labels(symbols, M, ch.L), ch.constellation,
                       {"blocklen": blocklen, "L": ch.L})
    n = blocklen * n_blocks
    symbols = rng.integers(0, M, size=(n, ch.K))
    if csi_error > 0:
        y = np.concatenate([
            mimo_sample(perturbed_channel(ch, csi_error, rng), symbols[b * blocklen:(b + 1) * blocklen], rng)
            for b in range(n_blocks)
        ])
    else:
        y = mimo_sample(ch, symbols, rng)
    return Dataset("mimo", symbols, y, _joint_index(symbols, M), ch.constellation,
                   {"blocklen": blocklen})


def export_dataset_csv(ds: Dataset, path) -> None:
    """Write ``ds`` as CSV to a path or an open text handle."""
    if hasattr(path, "write"):
        _write_dataset(ds, path)
        return
    with open(path, "w", newline="") as fh:
        _write_dataset(ds, fh)


def _write_dataset(ds: Dataset, fh) -> None:
    vals = ds.constellation.values
    w = csv.writer(fh, lineterminator="\n")
    if ds.kind == "isi":
        w.writerow(["block", "i", "s", "state_index", "y"])
        n, T = ds.symbols.shape
        for b in range(n):
            for i in range(T):
                w.writerow([b, i + 1, repr(vals[ds.symbols[b, i]]), int(ds.states[b, i]),
                            repr(float(ds.y[b, i]))])
    else:
        K, N = ds.symbols.shape[1], ds.y.shape[1]
        blocklen = ds.meta.get("blocklen", len(ds))
        w.writerow(["block", "i"] + [f"s_{k + 1}" for k in range(K)] + ["state_index"]
                   + [f"y_{j + 1}" for j in range(N)])
        for t in range(ds.symbols.shape[0]):
            w.writerow([t // blocklen, t % blocklen + 1]
                       + [repr(vals[v]) for v in ds.symbols[t]] + [int(ds.states[t])]
                       + [repr(float(v)) for v in ds.y[t]])


def read_observations_csv(path) -> np.ndarray:
    """Observation columns (``y`` or ``y_1..y_N``) of a dataset CSV, one row per sample."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"no rows in {path}")
    cols = ["y"] if "y" in rows[0] else sorted((c for c in rows[0] if c.startswith("y_")),
                                                 key=lambda c: int(c[2:]))
    return np.array([[float(r[c]) for c in cols] for r in rows])
