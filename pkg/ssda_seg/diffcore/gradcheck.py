from collections.abc import Callable, Sequence

import numpy as np

from .tensor import Tensor

FD_STEP = 1e-4


def numerical_gradient(
    fn: Callable[[], Tensor], tensor: Tensor, h: float = FD_STEP
) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``tensor``."""
    tensor.data = np.ascontiguousarray(tensor.data)
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn().item()
        flat[i] = original - h
        minus = fn().item()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2 * h)
    return grad


def max_relative_error(
    fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = FD_STEP
) -> float:
    """Largest |analytic - numeric| / max(1, |numeric|) over all inputs.

    Inputs must be float64 leaves with ``requires_grad=True``.
    """
    for tensor in inputs:
        tensor.grad = None
    fn().backward()
    worst = 0.0
    for tensor in inputs:
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        numeric = numerical_gradient(fn, tensor, h)
        error = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
        worst = max(worst, float(error.max(initial=0.0)))
    return worst
