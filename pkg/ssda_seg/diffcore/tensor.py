from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from typing import Any

import numpy as np

from ssda_seg.errors import UsageError

log = logging.getLogger(__name__)

# maps the upstream gradient to one gradient (or None) per parent
BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """Dense array node of a reverse-mode differentiation graph.

    Leaves created with ``requires_grad=True`` receive ``grad`` after
    ``backward()``; intermediate nodes only pass gradients through.
    """

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float32)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._op = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: Tensor) -> Tensor:
        from .ops import add

        return add(self, other)

    def __mul__(self, other: Tensor | float) -> Tensor:
        from .ops import mul, scale

        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other: float) -> Tensor:
        from .ops import scale

        return scale(self, float(other))

    def __neg__(self) -> Tensor:
        from .ops import scale

        return scale(self, -1.0)

    def __sub__(self, other: Tensor) -> Tensor:
        return self + (-other)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        op = f" op={self._op}" if self._op else ""
        return f"Tensor{label}(shape={list(self.shape)}, dtype={self.dtype}{op})"


def apply_op(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: BackwardFn,
    op: str,
) -> Tensor:
    """Wrap a forward result; graph edges exist only when a parent needs grads."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        stack.extend(
            (parent, False)
            for parent in reversed(node._parents)
            if id(parent) not in visited
        )
    return order


def backward(loss: Tensor) -> None:
    if loss.data.size != 1:
        msg = f"backward() needs a scalar loss, got shape {list(loss.shape)}"
        raise UsageError(msg)
    if not loss.requires_grad:
        log.debug("backward() on a tensor without graph edges, nothing to do")
        return

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        upstream = grads.pop(id(node), None)
        if upstream is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = upstream.astype(node.data.dtype, copy=True)
                else:
                    node.grad = node.grad + upstream
            continue
        for parent, grad in zip(node._parents, node._backward(upstream), strict=True):
            if grad is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + grad
            else:
                grads[id(parent)] = grad
