import logging

import numpy as np

from .params import ParamSet

log = logging.getLogger(__name__)


def clip_grad_total_norm(params: ParamSet, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    squares = 0.0
    for _, tensor in params.items():
        if tensor.grad is not None:
            squares += float(np.sum(tensor.grad.astype(np.float64) ** 2))
    total = float(np.sqrt(squares))
    if total > max_norm:
        factor = max_norm / total
        log.debug(f"clipping gradient norm {total:.4f} to {max_norm}")
        for _, tensor in params.items():
            if tensor.grad is not None:
                tensor.grad = (tensor.grad * factor).astype(tensor.grad.dtype)
    return total


def sgd_nesterov_step(
    params: ParamSet,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
) -> None:
    """g = grad + wd*p; v = m*v + g; p = p - lr*(g + m*v)."""
    for name, tensor in params.items():
        if tensor.grad is None:
            continue
        grad = tensor.grad + weight_decay * tensor.data
        velocity = params.momentum_buffer(name)
        velocity *= momentum
        velocity += grad
        update = grad + momentum * velocity
        tensor.data = (tensor.data - lr * update).astype(tensor.data.dtype)
    params.step += 1
