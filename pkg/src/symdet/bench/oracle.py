"""Randomised agreement checks between the trellis detectors and exhaustive search."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import trellis
from ..channels import BPSK, OOK, FmChannel, db_to_linear, fm_loglik_table, fm_sample


@dataclass
class OracleReport:
    check: str
    instances: int
    max_error: float
    failures: int

    @property
    def passed(self) -> bool:
        return self.failures == 0


def random_instance(rng: np.random.Generator, max_T: int = 8, max_L: int = 3):
    """A random small ISI block: ``(channel, symbols, y)``."""
    kind = "awgn" if rng.random() < 0.5 else "poisson"
    L = int(rng.integers(1, max_L + 1))
    T = int(rng.integers(1, max_T + 1))
    taps = rng.uniform(0.1, 1.0, L)
    if kind == "awgn":
        ch = FmChannel(kind, taps, db_to_linear(rng.uniform(-6, 10)), BPSK)
    else:
        ch = FmChannel(kind, taps, db_to_linear(rng.uniform(0, 20)), OOK)
    s = rng.integers(0, 2, T)
    return ch, s, fm_sample(ch, s, rng)


def check_bcjr(n: int, rng: np.random.Generator, tol: float = 1e-9) -> OracleReport:
    worst, bad = 0.0, 0
    for _ in range(n):
        ch, _, y = random_instance(rng)
        ll = fm_loglik_table(ch, y)
        marg, _ = trellis.bcjr(ll, y, ch.L, ch.constellation)
        err = float(np.abs(marg - trellis.bruteforce_symbol_map(ll, y, ch.L, ch.constellation)).max())
        worst = max(worst, err)
        bad += err > tol
    return OracleReport("bcjr_vs_bruteforce_map", n, worst, bad)


def check_viterbi(n: int, rng: np.random.Generator, tol: float = 1e-9) -> OracleReport:
    """Optimal costs must agree; sequences must agree whenever the optimum is unique."""
    worst, bad = 0.0, 0
    for _ in range(n):
        ch, _, y = random_instance(rng)
        ll = fm_loglik_table(ch, y)
        seq, cost = trellis.viterbi(ll, y, ch.L, ch.constellation, return_cost=True)
        seqs, total = trellis.sequence_logliks(ll, ch.M, ch.L)
        order = np.sort(-total)
        err = abs(cost - order[0]) / max(1.0, abs(order[0]))
        worst = max(worst, err)
        unique = len(order) == 1 or order[1] - order[0] > tol * max(1.0, abs(order[0]))
        mismatch = unique and not np.array_equal(seq, seqs[int(np.argmax(total))])
        bad += (err > tol) or mismatch
    return OracleReport("viterbi_vs_bruteforce_ml", n, worst, bad)


def run_oracles(n: int = 200, seed: int = 0) -> list:
    rng = np.random.default_rng(seed)
    return [check_bcjr(n, rng), check_viterbi(n, rng)]
