"""Minimal numpy backprop engine and the four spectrum classifiers."""

from .layers import ShapeError, cross_entropy, softmax
from .model import ARCHITECTURES, BATCH_SIZES, LayerSpec, ModelSpec, Network, build_model, shape_trace
from .train import Adam, History, TrainConfig, TrainingDiverged, fit_network, load_checkpoint, predict, save_checkpoint, train

__all__ = [
    "ARCHITECTURES", "BATCH_SIZES", "Adam", "History", "LayerSpec", "ModelSpec", "Network", "ShapeError",
    "TrainConfig", "TrainingDiverged", "build_model", "cross_entropy", "fit_network",
    "load_checkpoint", "predict", "save_checkpoint", "shape_trace", "softmax", "train",
]
