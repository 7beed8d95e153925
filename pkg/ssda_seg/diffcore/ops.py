"""Differentiable operations over :class:`Tensor`.

Every op returns a new tensor whose backward closure maps the upstream
gradient to one gradient per input. Shapes must match exactly; the only
broadcasting is over channels for biases and affine norm parameters.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ssda_seg.errors import ConfigurationError, NumericError

from .tensor import Tensor, apply_op

NORM_EPS = 1e-5
L2_EPS = 1e-12

NormMode = Literal["train", "eval"]


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        msg = f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ"
        raise ConfigurationError(msg)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return apply_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return apply_op(
        a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul"
    )


def scale(x: Tensor, factor: float) -> Tensor:
    f = x.data.dtype.type(factor)
    return apply_op(x.data * f, (x,), lambda g: (g * f,), "scale")


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return apply_op(
        out, (x,), lambda g: (np.full_like(x.data, g.reshape(())),), "sum"
    )


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / max(x.data.size, 1))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return apply_op(
        x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape"
    )


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    inverse = np.argsort(axes)
    return apply_op(
        np.transpose(x.data, axes),
        (x,),
        lambda g: (np.transpose(g, inverse),),
        "transpose",
    )


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0, *sizes])

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        return [
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(tensors))
        ]

    return apply_op(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        _backward,
        "concat",
    )


def slice_batch(x: Tensor, start: int, stop: int) -> Tensor:
    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        grad[start:stop] = g
        return (grad,)

    return apply_op(x.data[start:stop].copy(), (x,), _backward, "slice")


def take_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor; repeated indices accumulate gradient."""
    index = np.asarray(index, dtype=np.int64)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return apply_op(x.data[index], (x,), _backward, "take_rows")


def pixels(x: Tensor) -> Tensor:
    """[B, D, h, w] feature map to [B*h*w, D] rows in row-major pixel order."""
    b, d, h, w = x.shape
    return reshape(transpose(x, (0, 2, 3, 1)), (b * h * w, d))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        msg = f"matmul: incompatible shapes {list(a.shape)} and {list(b.shape)}"
        raise ConfigurationError(msg)
    return apply_op(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return apply_op(
        np.where(positive, x.data, 0).astype(x.dtype),
        (x,),
        lambda g: (g * positive,),
        "relu",
    )


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    if x.data.ndim != 4 or weight.data.ndim != 4 or x.shape[1] != weight.shape[1]:
        msg = f"conv2d: input {list(x.shape)} does not match weight {list(weight.shape)}"
        raise ConfigurationError(msg)
    batch, _, height, width = x.shape
    c_out, _, kh, kw = weight.shape
    if bias is not None and bias.shape != (c_out,):
        msg = f"conv2d: bias {list(bias.shape)} does not match weight {list(weight.shape)}"
        raise ConfigurationError(msg)
    out_h = (height + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    out_w = (width + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    if out_h < 1 or out_w < 1:
        msg = f"conv2d: input {list(x.shape)} too small for weight {list(weight.shape)} (dilation {dilation}, padding {padding})"
        raise ConfigurationError(msg)

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))

    def window(i: int, j: int) -> tuple[slice, slice, slice, slice]:
        top, left = i * dilation, j * dilation
        return (
            slice(None),
            slice(None),
            slice(top, top + stride * (out_h - 1) + 1, stride),
            slice(left, left + stride * (out_w - 1) + 1, stride),
        )

    out = np.zeros((batch, c_out, out_h, out_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = padded[window(i, j)]
            out += np.einsum("bchw,oc->bohw", patch, weight.data[:, :, i, j])
    if bias is not None:
        out += bias.data[None, :, None, None]

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        grad_padded = np.zeros_like(padded)
        grad_weight = np.zeros_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                idx = window(i, j)
                grad_weight[:, :, i, j] = np.einsum("bohw,bchw->oc", g, padded[idx])
                grad_padded[idx] += np.einsum("bohw,oc->bchw", g, weight.data[:, :, i, j])
        grad_x = grad_padded[:, :, padding : padding + height, padding : padding + width]
        grad_bias = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return grad_x, grad_weight, grad_bias

    parents = (x, weight) if bias is None else (x, weight, bias)
    return apply_op(out, parents, lambda g: _backward(g)[: len(parents)], "conv2d")


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @staticmethod
    def fresh(channels: int, dtype: np.dtype | type = np.float32) -> RunningStats:
        return RunningStats(
            mean=np.zeros(channels, dtype=dtype), var=np.ones(channels, dtype=dtype)
        )


@dataclass
class _NormCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    count: int


def norm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mode: NormMode,
    running_stats: RunningStats,
) -> Tensor:
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        msg = f"norm2d: input {list(x.shape)} does not match gamma {list(gamma.shape)} / beta {list(beta.shape)}"
        raise ConfigurationError(msg)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    axes = (0, 2, 3)

    if mode == "train":
        if count == 1:
            msg = f"norm2d: cannot estimate batch statistics from a single value per channel, input {list(x.shape)}"
            raise NumericError(msg)
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = running_stats.momentum
        running_stats.mean = ((1 - m) * running_stats.mean + m * mean).astype(
            running_stats.mean.dtype
        )
        unbiased = var * count / (count - 1)
        running_stats.var = ((1 - m) * running_stats.var + m * unbiased).astype(
            running_stats.var.dtype
        )
    else:
        mean = running_stats.mean.astype(x.dtype)
        var = running_stats.var.astype(x.dtype)

    inv_std = (1.0 / np.sqrt(var + NORM_EPS)).astype(x.dtype)
    cache = _NormCache(
        xhat=(x.data - mean[None, :, None, None]) * inv_std[None, :, None, None],
        inv_std=inv_std,
        count=count,
    )
    out = gamma.data[None, :, None, None] * cache.xhat + beta.data[None, :, None, None]

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_gamma = (g * cache.xhat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        grad_xhat = g * gamma.data[None, :, None, None]
        inv = cache.inv_std[None, :, None, None]
        if mode == "train":
            grad_x = (
                inv
                / cache.count
                * (
                    cache.count * grad_xhat
                    - grad_xhat.sum(axis=axes, keepdims=True)
                    - cache.xhat * (grad_xhat * cache.xhat).sum(axis=axes, keepdims=True)
                )
            )
        else:
            grad_x = grad_xhat * inv
        return grad_x, grad_gamma, grad_beta

    return apply_op(out.astype(x.dtype), (x, gamma, beta), _backward, "norm2d")


def _check_finite(x: Tensor, op: str) -> None:
    if np.isnan(x.data).any():
        msg = f"{op}: NaN in input of shape {list(x.shape)}"
        raise NumericError(msg)


def softmax_array(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax_array(logits: np.ndarray, axis: int = 1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(logits: Tensor, axis: int = 1) -> Tensor:
    _check_finite(logits, "softmax")
    probs = softmax_array(logits.data, axis)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (probs * (g - (g * probs).sum(axis=axis, keepdims=True)),)

    return apply_op(probs, (logits,), _backward, "softmax")


def log_softmax(logits: Tensor, axis: int = 1) -> Tensor:
    _check_finite(logits, "log_softmax")
    out = log_softmax_array(logits.data, axis)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return apply_op(out, (logits,), _backward, "log_softmax")


def _interpolation_matrix(out_size: int, in_size: int, dtype: np.dtype) -> np.ndarray:
    # align_corners=False: source = (dst + 0.5) * in/out - 0.5, clamped at the border
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    ratio = in_size / out_size
    for dst in range(out_size):
        src = max((dst + 0.5) * ratio - 0.5, 0.0)
        lo = min(int(np.floor(src)), in_size - 1)
        hi = min(lo + 1, in_size - 1)
        frac = src - lo
        matrix[dst, lo] += 1.0 - frac
        matrix[dst, hi] += frac
    return matrix.astype(dtype)


def bilinear_upsample(x: Tensor, height: int, width: int) -> Tensor:
    _, _, in_h, in_w = x.shape
    rows = _interpolation_matrix(height, in_h, x.dtype)
    cols = _interpolation_matrix(width, in_w, x.dtype)
    out = np.einsum("Hh,bchw,Ww->bcHW", rows, x.data, cols)
    return apply_op(
        out,
        (x,),
        lambda g: (np.einsum("Hh,bcHW,Ww->bchw", rows, g, cols),),
        "bilinear_upsample",
    )


def l2_normalize(x: Tensor, axis: int = 1, eps: float = L2_EPS) -> Tensor:
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    denom = np.maximum(norm, eps)
    out = x.data / denom
    above = norm > eps

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        projected = (g - out * (g * out).sum(axis=axis, keepdims=True)) / denom
        return (np.where(above, projected, g / denom).astype(x.dtype),)

    return apply_op(out.astype(x.dtype), (x,), _backward, "l2_normalize")
