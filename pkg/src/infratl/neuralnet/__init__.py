"""From-scratch tensor layers and the TL surrogate CNN."""

from .layers import (Adam, BatchNorm, Conv2D, Dense, Dropout, MaxPool2D, ReLU,
                     Tanh, glorot_uniform, mse)
from .model import ModelConfig, SurrogateModel
from .training import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "Adam", "BatchNorm", "Conv2D", "Dense", "Dropout", "MaxPool2D", "ReLU",
    "Tanh", "glorot_uniform", "mse", "ModelConfig", "SurrogateModel",
    "Checkpoint", "TrainConfig", "train", "save_checkpoint", "load_checkpoint",
]
