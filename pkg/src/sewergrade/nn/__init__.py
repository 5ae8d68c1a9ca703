"""Numeric kernel: layers with explicit backward passes plus Adam."""

from .adam import Adam, AdamState, adam_step
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2x2, ReLU
from .ops import (
    LayerCache,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
    require_finite,
    softmax,
    softmax_cross_entropy,
    softmax_cross_entropy_batch,
)

__all__ = [
    "Adam",
    "AdamState",
    "adam_step",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "MaxPool2x2",
    "ReLU",
    "LayerCache",
    "conv2d_backward",
    "conv2d_forward",
    "dense_backward",
    "dense_forward",
    "dropout_backward",
    "dropout_forward",
    "maxpool2x2_backward",
    "maxpool2x2_forward",
    "relu_backward",
    "relu_forward",
    "require_finite",
    "softmax",
    "softmax_cross_entropy",
    "softmax_cross_entropy_batch",
]
