"""Structured-text checkpoints.

A checkpoint is a JSON document holding the format version, the detector
kind, an architecture descriptor, the seed, the training configuration and
every parameter tensor written as decimal reals with 17 significant digits.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "symdet-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=float)
    return {"shape": list(arr.shape), "values": " ".join(f"{v:.17g}" for v in arr.ravel())}


def _decode(d: dict) -> np.ndarray:
    vals = d["values"].split()
    arr = np.array([float(v) for v in vals], dtype=float)
    shape = tuple(d["shape"])
    if arr.size != int(np.prod(shape)):
        raise CheckpointError(f"tensor has {arr.size} values, shape {shape} needs {int(np.prod(shape))}")
    return arr.reshape(shape)


def dump(kind: str, arch: dict, seed: int, config: dict, params: dict, extra: dict | None = None) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "arch": arch,
        "seed": int(seed),
        "config": config,
        "extra": {k: _encode(v) if isinstance(v, np.ndarray) else v for k, v in (extra or {}).items()},
        "params": {k: _encode(v) for k, v in params.items()},
    }
    return json.dumps(doc, indent=1, sort_keys=False)


def save(path, **kw) -> None:
    Path(path).write_text(dump(**kw))


def loads(text: str, expect_kind: str | None = None) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed or truncated checkpoint: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError("not a symdet checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('version')!r} is not supported "
                              f"(this build reads version {VERSION})")
    for key in ("kind", "arch", "seed", "config", "params"):
        if key not in doc:
            raise CheckpointError(f"checkpoint is missing {key!r}")
    if expect_kind is not None and doc["kind"] != expect_kind:
        raise CheckpointError(f"checkpoint holds a {doc['kind']!r} model, expected {expect_kind!r}")
    try:
        doc["params"] = {k: _decode(v) for k, v in doc["params"].items()}
        doc["extra"] = {k: _decode(v) if isinstance(v, dict) and "values" in v else v
                        for k, v in doc.get("extra", {}).items()}
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"corrupt tensor data: {exc}") from None
    return doc


def load(path, expect_kind: str | None = None) -> dict:
    return loads(Path(path).read_text(), expect_kind)
