"""Learned detectors: ViterbiNet, BCJRNet, DeepSIC, DetNet and SBRNN."""
from .deepsic import DeepSicNet, deepsic_detect, deepsic_train_e2e, deepsic_train_seq
from .detnet import DetNetParams, detnet_build, detnet_detect, detnet_forward, detnet_train
from .io import KINDS, load_model, loads_model, dumps_model, save_model
from .likelihood import (ExactPosterior, LikelihoodModel, bcjrnet_detect, classification_model,
                         learned_loglik, likelihood_train, mdn_model, viterbinet_detect)
from .sbrnn import SbrnnModel, brnn_block_detect, sbrnn_detect, sbrnn_train

__all__ = [
    "DeepSicNet", "deepsic_detect", "deepsic_train_e2e", "deepsic_train_seq",
    "DetNetParams", "detnet_build", "detnet_detect", "detnet_forward", "detnet_train",
    "KINDS", "load_model", "loads_model", "dumps_model", "save_model",
    "ExactPosterior", "LikelihoodModel", "bcjrnet_detect", "classification_model",
    "learned_loglik", "likelihood_train", "mdn_model", "viterbinet_detect",
    "SbrnnModel", "brnn_block_detect", "sbrnn_detect", "sbrnn_train",
]
