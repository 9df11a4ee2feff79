"""Minimal reverse-mode tape over numpy arrays plus the layers built on it."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gaussian import (
    GaussianParams3,
    gaussian3_from_linear,
    gaussian3_nll,
    gaussian3_sample,
    gaussian3_shift_scale,
)
from .gradcheck import finite_diff_gradcheck
from .layers import (
    LstmState,
    LstmWeights,
    conv2d_forward,
    dense_forward,
    embed,
    lstm_cell_step,
    scaled_dot_attention,
    uniform_init,
)
from .optim import AdamState, adam_step, clip_global_norm
from .tensor import NonFiniteError, Tensor, concat, constant, parameter

__all__ = [
    "AdamState",
    "GaussianParams3",
    "LstmState",
    "LstmWeights",
    "NonFiniteError",
    "Tensor",
    "adam_step",
    "clip_global_norm",
    "concat",
    "constant",
    "conv2d_forward",
    "dense_forward",
    "embed",
    "finite_diff_gradcheck",
    "gaussian3_from_linear",
    "gaussian3_nll",
    "gaussian3_sample",
    "gaussian3_shift_scale",
    "load_checkpoint",
    "lstm_cell_step",
    "parameter",
    "save_checkpoint",
    "scaled_dot_attention",
    "uniform_init",
]
