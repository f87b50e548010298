"""Self-contained neural-network kit: autodiff tensors, layers, Adam."""

from .tensor import (
    Tensor,
    as_tensor,
    concat,
    graph_conv,
    leaky_relu,
    matmul,
    narrow,
    reshape,
    sigmoid,
    stack,
    tabs,
    tanh,
    tmean,
    tsum,
)
from .layers import LEAKY_SLOPE, BiRecurrent, GraphConv, Layer, Linear, ResidualBlock
from .optim import Adam
from .check import gradient_check
from .serialize import load_params, save_params

__all__ = [
    "Tensor",
    "as_tensor",
    "concat",
    "graph_conv",
    "leaky_relu",
    "matmul",
    "narrow",
    "reshape",
    "sigmoid",
    "stack",
    "tabs",
    "tanh",
    "tmean",
    "tsum",
    "LEAKY_SLOPE",
    "BiRecurrent",
    "GraphConv",
    "Layer",
    "Linear",
    "ResidualBlock",
    "Adam",
    "gradient_check",
    "load_params",
    "save_params",
]
