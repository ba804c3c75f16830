from .tensor import (
    Tape,
    Tensor,
    add,
    backward,
    concat,
    div,
    leaky_relu,
    matmul,
    mul,
    neg,
    no_grad,
    power,
    reduce_max,
    reduce_min,
    reshape,
    select,
    sigmoid,
    sqrt,
    stack,
    sub,
    tmean,
    transpose,
    tsum,
)
from .ops import (
    batchnorm,
    conv2d,
    maxpool2,
    pixel_shuffle2,
    pixel_unshuffle2,
    solve_spd,
)
from .optim import AdamW
from .gradcheck import grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "AdamW",
    "Tape",
    "Tensor",
    "add",
    "backward",
    "batchnorm",
    "concat",
    "conv2d",
    "div",
    "grad_check",
    "leaky_relu",
    "load_checkpoint",
    "matmul",
    "maxpool2",
    "mul",
    "neg",
    "no_grad",
    "pixel_shuffle2",
    "pixel_unshuffle2",
    "power",
    "reduce_max",
    "reduce_min",
    "reshape",
    "save_checkpoint",
    "select",
    "sigmoid",
    "solve_spd",
    "sqrt",
    "stack",
    "sub",
    "tmean",
    "transpose",
    "tsum",
]
