from .ops import (
    RunningStats,
    add,
    bilinear_upsample,
    concat,
    conv2d,
    l2_normalize,
    log_softmax,
    matmul,
    mean_all,
    mul,
    norm2d,
    pixels,
    relu,
    reshape,
    scale,
    slice_batch,
    softmax,
    softmax_array,
    sum_all,
    take_rows,
    transpose,
)
from .optim import clip_grad_total_norm, sgd_nesterov_step
from .params import ParamSet
from .tensor import Tensor, apply_op, backward

__all__ = [
    "ParamSet",
    "RunningStats",
    "Tensor",
    "add",
    "apply_op",
    "backward",
    "bilinear_upsample",
    "clip_grad_total_norm",
    "concat",
    "conv2d",
    "l2_normalize",
    "log_softmax",
    "matmul",
    "mean_all",
    "mul",
    "norm2d",
    "pixels",
    "relu",
    "reshape",
    "scale",
    "sgd_nesterov_step",
    "slice_batch",
    "softmax",
    "softmax_array",
    "sum_all",
    "take_rows",
    "transpose",
]
