from .layers import (
    ConvLayer,
    LinearLayer,
    ShapeError,
    TransposeConvLayer,
    conv1d_backward,
    conv1d_forward,
    dropout,
    linear_backward,
    linear_forward,
    mse_loss,
    relu,
    relu_backward,
    same_padding,
    sigmoid,
    sigmoid_backward,
    tconv1d_backward,
    tconv1d_forward,
)
from .optim import AdamState, adam_init, adam_step
from .gradcheck import grad_check
from .serialize import load_arrays, save_arrays

__all__ = [
    "ConvLayer",
    "TransposeConvLayer",
    "LinearLayer",
    "AdamState",
    "ShapeError",
    "conv1d_forward",
    "conv1d_backward",
    "tconv1d_forward",
    "tconv1d_backward",
    "relu",
    "relu_backward",
    "sigmoid",
    "sigmoid_backward",
    "dropout",
    "linear_forward",
    "linear_backward",
    "mse_loss",
    "same_padding",
    "adam_init",
    "adam_step",
    "grad_check",
    "save_arrays",
    "load_arrays",
]
