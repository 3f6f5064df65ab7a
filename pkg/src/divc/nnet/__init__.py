"""Encoder/decoder network, training objective and model files."""

from .modelfile import ModelFileError, fnv1a64, load_model, model_hash, save_model
from .network import Architecture, Model, decode, encode, quantize, reconstruct, sign_probs
from .objective import LossTerms, masked_distortion, sign_rate_loss, topology_masks, total_loss
from .training import TrainConfig, TrainingDiverged, TrainResult, blocks_from_volumes, train

__all__ = [
    "Architecture", "Model", "encode", "decode", "quantize", "reconstruct", "sign_probs",
    "LossTerms", "masked_distortion", "sign_rate_loss", "topology_masks", "total_loss",
    "TrainConfig", "TrainResult", "TrainingDiverged", "train", "blocks_from_volumes",
    "ModelFileError", "fnv1a64", "load_model", "save_model", "model_hash",
]
