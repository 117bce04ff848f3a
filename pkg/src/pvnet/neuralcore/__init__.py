"""Minimal float64 tensor layers with manual backpropagation.

Tensors are plain C-ordered ``numpy.ndarray`` objects of dtype float64.
"""
from .kernels import BACKEND
from .layers import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    mse_loss,
    prelu_backward,
    prelu_forward,
)
from .lstm import (
    bilstm_backward,
    bilstm_forward,
    hard_sigmoid,
    lstm_backward,
    lstm_cell_backward,
    lstm_cell_forward,
    lstm_cell_step,
    lstm_forward,
)
from .numgrad import finite_diff_grad, max_rel_error
from .optim import AdamState, adam_update

__all__ = [
    "BACKEND",
    "AdamState",
    "adam_update",
    "bilstm_backward",
    "bilstm_forward",
    "conv2d_backward",
    "conv2d_forward",
    "dense_backward",
    "dense_forward",
    "dropout_backward",
    "dropout_forward",
    "finite_diff_grad",
    "hard_sigmoid",
    "lstm_backward",
    "lstm_cell_backward",
    "lstm_cell_forward",
    "lstm_cell_step",
    "lstm_forward",
    "max_rel_error",
    "maxpool2x2_backward",
    "maxpool2x2_forward",
    "mse_loss",
    "prelu_backward",
    "prelu_forward",
]
