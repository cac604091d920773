"""Dense tensors, reverse-mode autodiff, and Adam."""
from app.numcore import ops
from app.numcore.ops import (
    add,
    concat,
    cross_entropy,
    dropout,
    embedding,
    gelu,
    index_rows,
    layer_norm,
    matmul,
    mul,
    relu,
    reshape,
    slice_axis,
    softmax,
    sub,
    transpose,
)
from app.numcore.optim import Adam, OptimizerState, adam_step, warmup_linear_decay
from app.numcore.tensor import Tensor, backward, no_grad

__all__ = [
    "Adam",
    "OptimizerState",
    "Tensor",
    "adam_step",
    "add",
    "backward",
    "concat",
    "cross_entropy",
    "dropout",
    "embedding",
    "gelu",
    "index_rows",
    "layer_norm",
    "matmul",
    "mul",
    "no_grad",
    "ops",
    "relu",
    "reshape",
    "slice_axis",
    "softmax",
    "sub",
    "transpose",
    "warmup_linear_decay",
]
