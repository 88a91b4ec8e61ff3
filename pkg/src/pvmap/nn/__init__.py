"""Forward/backward numerical building blocks and the momentum-SGD optimizer."""

from .ops import (
    PoolRecord,
    conv2d,
    dense,
    max_unpool,
    maxpool3x3s2,
    relu,
    softmax2,
    softmax2_xent,
    softmax2_xent_backward,
)
from .optimizer import SGDState, sgd_step
from .weights_io import read_weights, write_weights

__all__ = [
    "PoolRecord",
    "SGDState",
    "conv2d",
    "dense",
    "max_unpool",
    "maxpool3x3s2",
    "read_weights",
    "relu",
    "sgd_step",
    "softmax2",
    "softmax2_xent",
    "softmax2_xent_backward",
    "write_weights",
]
