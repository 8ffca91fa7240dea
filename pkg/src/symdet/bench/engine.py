"""Monte Carlo SER evaluation and the sweep driver.

A cell is one (SNR, gamma, CSI error) grid point. Within a cell every
detector sees the same test data: the test stream depends on the master
seed, the grid indices and the trial, never on the detector. Learned
detectors train on data from the receiver's view of the channel (a fresh
perturbation per training block when the CSI error is positive);
model-based detectors draw a fresh perturbed estimate per test block.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import mimo, trellis
from ..channels import (FmChannel, MimoChannel, fm_loglik_table, fm_sample, gen_dataset, mimo_sample,
                        perturbed_channel)
from ..hybrid import (bcjrnet_detect, brnn_block_detect, deepsic_detect, deepsic_train_e2e,
                      deepsic_train_seq, detnet_detect, detnet_train, likelihood_train, sbrnn_detect,
                      sbrnn_train, viterbinet_detect)
from ..neural import TrainConfig
from ..numkit import derive_seed, rng_stream
from .spec import ExperimentSpec, ResultRecord

log = logging.getLogger(__name__)


def ser_eval(detector, ch, n_symbols: int, rng: np.random.Generator, blocklen: int = 1000,
             noiseless: bool = False):
    """Symbol errors of ``detector`` on fresh data from ``ch``.

    ISI: ``detector(y)`` maps one block of observations to symbol indices.
    MIMO: ``detector(Y)`` maps (b, N) observations to (b, K) indices and
    each user-symbol counts once; ``n_symbols`` is rounded up to whole
    channel uses. Returns ``(errors, symbols, ser)``.
    """
    if n_symbols < 1 or blocklen < 1:
        raise ValueError("n_symbols and blocklen must be positive")
    M = ch.constellation.M
    errors = symbols = 0
    if isinstance(ch, FmChannel):
        remaining = n_symbols
        while remaining > 0:
            T = min(blocklen, remaining)
            s = rng.integers(0, M, T)
            y = fm_sample(ch, s, rng, noiseless)
            errors += int(np.count_nonzero(np.asarray(detector(y)) != s))
            symbols += T
            remaining -= T
    else:
        remaining = math.ceil(n_symbols / ch.K)
        while remaining > 0:
            n = min(blocklen, remaining)
            s = rng.integers(0, M, (n, ch.K))
            Y = mimo_sample(ch, s, rng, noiseless)
            errors += int(np.count_nonzero(np.asarray(detector(Y)).reshape(n, ch.K) != s))
            symbols += s.size
            remaining -= n
    return errors, symbols, errors / symbols


# ---------------------------------------------------------------------------
# model-based detectors

def _estimate(ch, sigma, rng):
    return perturbed_channel(ch, sigma, rng) if sigma > 0 else ch


def _gaussian_view(ch: MimoChannel, Y):
    """(Y, H, noise_var) of the linear Gaussian model a Gaussian-model detector assumes.

    Poisson outputs are centred and scaled onto y - 1 = H s / sigma + noise
    with unit noise variance (the Poisson variance at zero signal).
    """
    if ch.kind == "gaussian":
        return Y, ch.H, ch.noise_var
    return Y - 1.0, ch.H / math.sqrt(ch.noise_var), 1.0


def model_based_detector(name: str, ch, sigma: float, rng: np.random.Generator, options=None):
    """Closure that runs detector ``name`` with a fresh channel estimate per call."""
    opts = options or {}

    if isinstance(ch, FmChannel):
        def detect(y):
            est = _estimate(ch, sigma, rng)
            ll = fm_loglik_table(est, y)
            if name == "viterbi":
                return trellis.viterbi(ll, y, ch.L, ch.constellation)
            return trellis.bcjr(ll, y, ch.L, ch.constellation)[1]
        return detect

    def detect(Y):
        est = _estimate(ch, sigma, rng)
        if name == "map":
            return mimo.mimo_map_bruteforce(Y, est)[0]
        Yg, H, nv = _gaussian_view(est, Y)
        if name == "sic":
            cfg = mimo.SicConfig(iterations=int(opts.get("iterations", 5)))
            return mimo.iterative_sic_batch(Yg, H, nv, cfg, ch.constellation)[1]
        s = mimo.projected_gradient_detect(Yg, H, iterations=int(opts.get("iterations", 20)))
        return ch.constellation.index_of(s)
    return detect


# ---------------------------------------------------------------------------
# learned detectors

LEARNED = {"viterbinet", "bcjrnet", "sbrnn", "sbrnn_block", "deepsic", "deepsic_e2e", "detnet"}


def train_config(spec: ExperimentSpec, detector: str, seed: int) -> TrainConfig:
    kw = {**spec.train, **spec.options(detector).get("train", {})}
    kw.setdefault("seed", seed)
    return TrainConfig(**kw)


def model_key(detector: str, options: dict) -> str:
    """Detectors with equal keys share one trained model within a cell."""
    family = {"viterbinet": "likelihood", "bcjrnet": "likelihood",
              "sbrnn": "sbrnn", "sbrnn_block": "sbrnn"}.get(detector, detector)
    return family + ":" + json.dumps(options, sort_keys=True)


def fit_model(detector: str, spec: ExperimentSpec, ch, ds, sigma: float, seed: int,
              rng: np.random.Generator):
    """Train the model behind ``detector`` on dataset ``ds``."""
    opts = spec.options(detector)
    cfg = train_config(spec, detector, seed)
    if detector in ("viterbinet", "bcjrnet"):
        arch = {k: v for k, v in opts.items() if k not in ("train", "head")}
        return likelihood_train(ds, ch.L, opts.get("head", "classification"), cfg, seed,
                                kind=detector, **arch)
    if detector in ("sbrnn", "sbrnn_block"):
        return sbrnn_train(ds, int(opts.get("B", 10)), cfg, seed, opts.get("stride"),
                           int(opts.get("layers", 3)), int(opts.get("hidden", 100)),
                           float(opts.get("dropout", 0.1)))
    Q = int(opts.get("Q", 5))
    if detector == "deepsic":
        return deepsic_train_seq(ds, Q, cfg, seed, opts.get("arch"))
    if detector == "deepsic_e2e":
        return deepsic_train_e2e(ds, Q, cfg, seed, opts.get("arch"))
    if detector == "detnet":
        H = _estimate(ch, sigma, rng).H
        return detnet_train(ds, H, int(opts.get("Q", 20)), cfg, seed, opts.get("hidden"),
                            opts.get("weights", "log"), bool(opts.get("paper", False)))
    raise ValueError(f"no trainer for detector {detector!r}")


def learned_detector(detector: str, model, constellation):
    if detector == "viterbinet":
        return lambda y: viterbinet_detect(model, y)
    if detector == "bcjrnet":
        return lambda y: bcjrnet_detect(model, y)[1]
    if detector == "sbrnn":
        return lambda y: sbrnn_detect(model, y)[1]
    if detector == "sbrnn_block":
        return lambda y: brnn_block_detect(model, y)[1]
    if detector in ("deepsic", "deepsic_e2e"):
        return lambda Y: deepsic_detect(model, Y)[0]
    if detector == "detnet":
        return lambda Y: constellation.index_of(detnet_detect(model, Y))
    raise ValueError(f"unknown learned detector {detector!r}")


# ---------------------------------------------------------------------------
# sweep

def cell_seed(spec: ExperimentSpec, role: str, snr_i: int, g_i: int, s_i: int, trial: int, *extra) -> int:
    return derive_seed(int(spec.seed), role, snr_i, g_i, s_i, trial, *extra)


def eval_rng(spec: ExperimentSpec, snr_i: int, g_i: int, s_i: int, trial: int) -> np.random.Generator:
    return rng_stream(cell_seed(spec, "test", snr_i, g_i, s_i, trial))


def training_data(spec: ExperimentSpec, ch, sigma: float, rng: np.random.Generator):
    n_blocks = max(1, math.ceil(spec.n_train / spec.train_blocklen))
    return gen_dataset(ch, spec.train_blocklen, n_blocks, rng, csi_error=sigma)


def run_cell(spec: ExperimentSpec, snr_i: int, g_i: int, s_i: int) -> list:
    snr, sigma = spec.snr_db[snr_i], spec.sigma_e2[s_i]
    gamma = spec.gamma_grid()[g_i]
    ch = spec.build_channel(snr, gamma)
    totals = {d: [0, 0, 0.0, None] for d in spec.detectors}
    for trial in range(spec.trials):
        ds, models = None, {}
        for d in spec.detectors:
            acc = totals[d]
            if acc[3] is not None:
                continue
            t0 = time.perf_counter()
            try:
                if d in LEARNED:
                    key = model_key(d, spec.options(d))
                    if key not in models:
                        if ds is None:
                            ds = training_data(spec, ch, sigma,
                                               rng_stream(cell_seed(spec, "train", snr_i, g_i, s_i, trial)))
                        seed = cell_seed(spec, "init", snr_i, g_i, s_i, trial, key) % 2 ** 32
                        csi = rng_stream(cell_seed(spec, "model-csi", snr_i, g_i, s_i, trial))
                        models[key] = fit_model(d, spec, ch, ds, sigma, seed, csi)
                    det = learned_detector(d, models[key], ch.constellation)
                else:
                    csi = rng_stream(cell_seed(spec, "csi", snr_i, g_i, s_i, trial))
                    det = model_based_detector(d, ch, sigma, csi, spec.options(d))
                e, n, _ = ser_eval(det, ch, spec.n_test, eval_rng(spec, snr_i, g_i, s_i, trial),
                                   spec.test_blocklen)
                acc[0] += e
                acc[1] += n
            except Exception as exc:  # noqa: BLE001 - one failing cell must not end the sweep
                log.warning("cell snr=%s gamma=%s sigma=%s detector=%s failed: %s",
                            snr, gamma, sigma, d, exc)
                acc[3] = f"{type(exc).__name__}: {exc}"
            acc[2] += time.perf_counter() - t0
    return [ResultRecord(spec.experiment, d, snr, sigma, gamma,
                         0 if acc[3] else acc[1], 0 if acc[3] else acc[0], acc[2], int(spec.seed),
                         acc[3])
            for d, acc in totals.items()]


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(spec: ExperimentSpec, workers: int | None = None) -> list:
    """Every grid cell, in grid order (SNR outermost, then gamma, then CSI error)."""
    cells = [(spec, a, b, c) for a in range(len(spec.snr_db)) for b in range(len(spec.gamma_grid()))
             for c in range(len(spec.sigma_e2))]
    workers = spec.workers if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell_args, cells))
    else:
        chunks = [run_cell(*c) for c in cells]
    return [r for chunk in chunks for r in chunk]
