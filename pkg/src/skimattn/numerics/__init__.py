from .tensor import (
    Tensor,
    add,
    cross_entropy,
    dropout,
    embedding,
    exp,
    gelu,
    layer_norm,
    log,
    matmul,
    mul,
    no_grad,
    reshape,
    scale,
    softmax_rows,
    tanh,
    transpose,
)
from .optim import OptimizerState, adamw_step
from .gradcheck import grad_check

__all__ = [
    "Tensor",
    "add",
    "cross_entropy",
    "dropout",
    "embedding",
    "exp",
    "gelu",
    "layer_norm",
    "log",
    "matmul",
    "mul",
    "no_grad",
    "reshape",
    "scale",
    "softmax_rows",
    "tanh",
    "transpose",
    "OptimizerState",
    "adamw_step",
    "grad_check",
]
