from . import tensor
from .blocks import (ACTIVATIONS, Dense, LSTMCell, MixtureHead, MLP, ParamStore,
                     bidirectional_run, mixture_logpdf)
from .tensor import ShapeError, Tensor
from .train import (Adam, TrainConfig, TrainingDiverged, cross_entropy, mdn_nll,
                    nll_logits, train)

__all__ = [
    "tensor", "Tensor", "ShapeError", "ParamStore", "Dense", "MLP", "LSTMCell", "MixtureHead",
    "bidirectional_run", "mixture_logpdf", "ACTIVATIONS", "Adam", "TrainConfig",
    "TrainingDiverged", "cross_entropy", "mdn_nll", "nll_logits", "train",
]
