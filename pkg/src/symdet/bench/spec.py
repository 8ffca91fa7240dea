"""Experiment specification and result records."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..channels import (BPSK, OOK, Constellation, FmChannel, MimoChannel, build_spatial_H,
                        db_to_linear, exp_decay_taps, read_taps, snr_to_noise_var)

ISI_DETECTORS = ("viterbi", "bcjr", "viterbinet", "bcjrnet", "sbrnn", "sbrnn_block")
MIMO_DETECTORS = ("sic", "map", "pg", "deepsic", "deepsic_e2e", "detnet")
CONSTELLATIONS = {"bpsk": BPSK, "ook": OOK}


class SpecError(ValueError):
    pass


def gamma_grid(start: float = 0.1, stop: float = 2.0, num: int = 20) -> list:
    """Uniformly spaced decay parameters (the default spans [0.1, 2] with 20 points)."""
    if num < 1 or start <= 0 or stop < start:
        raise SpecError("gamma grid needs 0 < start <= stop and num >= 1")
    return [float(g) for g in np.linspace(start, stop, int(num))]


@dataclass
class ExperimentSpec:
    """One sweep.

    ``channel`` holds ``family`` ("isi" or "mimo"), ``kind`` (awgn/poisson or
    gaussian/poisson), ``constellation`` and either ``L`` (plus an optional
    ``taps_file``) or ``N`` and ``K``. Grids are lists. ``n_test`` counts
    symbols (user-symbols for MIMO). ``detector_config`` maps a detector
    name to options, including a ``train`` dict of training overrides.
    """
    experiment: str = "sweep"
    channel: dict = field(default_factory=lambda: {"family": "isi", "kind": "awgn", "L": 4})
    detectors: list = field(default_factory=lambda: ["viterbi", "bcjr"])
    snr_db: list = field(default_factory=lambda: [8.0])
    sigma_e2: list = field(default_factory=lambda: [0.0])
    gamma: list = field(default_factory=lambda: [0.2])
    n_train: int = 5000
    train_blocklen: int = 100
    n_test: int = 100000
    test_blocklen: int = 1000
    trials: int = 1
    seed: int = 0
    train: dict = field(default_factory=dict)
    detector_config: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.gamma, dict):
            self.gamma = gamma_grid(**self.gamma)
        for name in ("snr_db", "sigma_e2", "gamma"):
            v = getattr(self, name)
            setattr(self, name, [float(x) for x in (v if isinstance(v, (list, tuple)) else [v])])
        if isinstance(self.detectors, str):
            self.detectors = [self.detectors]
        self.validate()

    @property
    def family(self) -> str:
        return self.channel.get("family", "isi")

    def validate(self):
        if self.family not in ("isi", "mimo"):
            raise SpecError(f"channel family must be 'isi' or 'mimo', got {self.family!r}")
        known = ISI_DETECTORS if self.family == "isi" else MIMO_DETECTORS
        if not self.detectors:
            raise SpecError("detector list is empty")
        for d in self.detectors:
            if d not in known:
                raise SpecError(f"detector {d!r} is not available for {self.family} channels "
                                f"(choose from {', '.join(known)})")
        if not self.snr_db or not self.sigma_e2:
            raise SpecError("SNR and CSI-error grids must be nonempty")
        if self.family == "isi" and not self.gamma and "taps_file" not in self.channel:
            raise SpecError("gamma grid is empty")
        if any(s < 0 for s in self.sigma_e2):
            raise SpecError("CSI error variance must be nonnegative")
        for name in ("n_train", "train_blocklen", "n_test", "test_blocklen", "trials", "workers"):
            if int(getattr(self, name)) < 1:
                raise SpecError(f"{name} must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise SpecError("seed must be an unsigned 64-bit integer")

    @property
    def constellation(self) -> Constellation:
        c = self.channel.get("constellation", "bpsk")
        if isinstance(c, (list, tuple)):
            return Constellation(tuple(c))
        try:
            return CONSTELLATIONS[c]
        except KeyError:
            raise SpecError(f"unknown constellation {c!r}") from None

    def gamma_grid(self) -> list:
        """Grid of channel-profile parameters; MIMO and tap-file channels have one entry."""
        if self.family == "mimo" or "taps_file" in self.channel:
            return [None]
        return list(self.gamma)

    def build_channel(self, snr_db: float, gamma):
        ch, const = self.channel, self.constellation
        if self.family == "isi":
            if "taps_file" in ch:
                taps = read_taps(ch["taps_file"])
            else:
                taps = exp_decay_taps(int(ch.get("L", 4)), gamma)
            return FmChannel(ch.get("kind", "awgn"), taps, db_to_linear(snr_db), const)
        H = (np.asarray(ch["H"], dtype=float) if "H" in ch
             else build_spatial_H(int(ch.get("N", 4)), int(ch.get("K", 4))))
        return MimoChannel(ch.get("kind", "gaussian"), H, snr_to_noise_var(snr_db), const)

    def options(self, detector: str) -> dict:
        return dict(self.detector_config.get(detector, {}))

    def to_dict(self) -> dict:
        return asdict(self)


def spec_from_dict(d: dict) -> ExperimentSpec:
    names = {f.name for f in fields(ExperimentSpec)}
    extra = set(d) - names
    if extra:
        raise SpecError(f"unknown spec fields: {', '.join(sorted(extra))}")
    return ExperimentSpec(**d)


def load_spec(path) -> ExperimentSpec:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise SpecError(f"{path}: spec must be a JSON object")
    return spec_from_dict(d)


CSV_FIELDS = ("experiment", "detector", "snr_db", "sigma_e2", "gamma", "symbols", "errors", "ser",
              "wall_time_s", "seed")


@dataclass
class ResultRecord:
    experiment: str
    detector: str
    snr_db: float
    sigma_e2: float
    gamma: float | None
    symbols: int
    errors: int
    wall_time_s: float
    seed: int
    error: str | None = None

    @property
    def ser(self) -> float:
        return self.errors / self.symbols if self.symbols else math.nan

    def row(self) -> dict:
        return {"experiment": self.experiment, "detector": self.detector, "snr_db": self.snr_db,
                "sigma_e2": self.sigma_e2, "gamma": self.gamma, "symbols": self.symbols,
                "errors": self.errors, "ser": self.ser, "wall_time_s": self.wall_time_s,
                "seed": self.seed}
