"""Checkpoint round trip for every learned detector."""
from __future__ import annotations

import numpy as np

from ..channels import Constellation
from ..neural import ParamStore, checkpoint
from .deepsic import DeepSicNet
from .detnet import DetNetParams
from .likelihood import LikelihoodModel
from .sbrnn import SbrnnModel

KINDS = ("viterbinet", "bcjrnet", "deepsic", "detnet", "sbrnn")


def _describe(model):
    """(kind, arch, seed, extra) for a trained model."""
    if isinstance(model, LikelihoodModel):
        arch = {"head": model.head, "L": model.L, "points": list(model.constellation.points),
                **model.arch}
        return model.kind, arch, model.store.seed, {}
    if isinstance(model, DeepSicNet):
        arch = {"N": model.N, "K": model.K, "Q": model.Q, "points": list(model.constellation.points),
                "training": model.training, **model.arch}
        return "deepsic", arch, model.seed, {}
    if isinstance(model, DetNetParams):
        arch = {"Q": model.Q, "hidden": model.hidden, "weights": model.weights}
        return "detnet", arch, model.store.seed, {"H": np.asarray(model.H)}
    if isinstance(model, SbrnnModel):
        arch = {"B": model.B, "layers": model.layers, "hidden": model.hidden,
                "dropout": model.dropout, "points": list(model.constellation.points)}
        return "sbrnn", arch, model.seed, {}
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def dumps_model(model) -> str:
    kind, arch, seed, extra = _describe(model)
    extra = {**extra, "trace": list(map(float, model.trace))}
    return checkpoint.dump(kind, arch, seed, model.config, model.store.state(), extra)


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def _rebuild(doc):
    kind, a, seed = doc["kind"], dict(doc["arch"]), doc["seed"]
    if kind in ("viterbinet", "bcjrnet"):
        const = Constellation(tuple(a.pop("points")))
        head, L = a.pop("head"), a.pop("L")
        model = LikelihoodModel(head, L, const, ParamStore(seed), a, kind=kind)
    elif kind == "deepsic":
        const = Constellation(tuple(a.pop("points")))
        model = DeepSicNet(a.pop("N"), a.pop("K"), a.pop("Q"), const,
                           {"hidden": a["hidden"], "activations": a["activations"]}, seed,
                           training=a["training"])
    elif kind == "detnet":
        from .detnet import detnet_build
        model = detnet_build(doc["extra"]["H"], a["Q"], seed, a["hidden"], a["weights"])
    elif kind == "sbrnn":
        model = SbrnnModel(a["B"], a["layers"], a["hidden"], a["dropout"],
                           Constellation(tuple(a["points"])), seed)
    else:
        raise checkpoint.CheckpointError(f"unknown detector kind {kind!r}")
    try:
        model.store.load_state(doc["params"])
    except (KeyError, ValueError) as exc:
        raise checkpoint.CheckpointError(f"parameters do not match the architecture: {exc}") from None
    model.config = doc["config"]
    model.trace = list(doc["extra"].get("trace", []))
    return model


def loads_model(text: str, expect_kind: str | None = None):
    return _rebuild(checkpoint.loads(text, expect_kind))


def load_model(path, expect_kind: str | None = None):
    """Load a checkpoint; ``expect_kind`` guards against using the wrong detector."""
    return _rebuild(checkpoint.load(path, expect_kind))
