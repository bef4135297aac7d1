"""Small float64 autodiff engine and the training substrate built on it."""

from .autograd import Tensor, as_tensor, backward, concat, einsum, scope, stack, where
from .checkpoint import load_checkpoint, save_checkpoint
from .functional import batch_norm, dropout, linear, mse_loss, relu
from .layers import (
    BatchNorm1d,
    Dropout,
    Linear,
    Module,
    Parameter,
    ReLU,
    ResidualBlock,
    Sequential,
)
from .optim import Adam, TrainConfig, adam_step, lr_at_epoch

__all__ = [
    "Tensor", "as_tensor", "backward", "concat", "einsum", "scope", "stack", "where",
    "load_checkpoint", "save_checkpoint",
    "batch_norm", "dropout", "linear", "mse_loss", "relu",
    "BatchNorm1d", "Dropout", "Linear", "Module", "Parameter", "ReLU", "ResidualBlock", "Sequential",
    "Adam", "TrainConfig", "adam_step", "lr_at_epoch",
]
