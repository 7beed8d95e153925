from __future__ import annotations

import hashlib
import logging
from collections.abc import Iterator

import numpy as np

from ssda_seg.errors import IntegrityError

from .ops import RunningStats
from .tensor import Tensor

log = logging.getLogger(__name__)


class ParamSet:
    """Named parameters, norm running statistics and optimizer momentum.

    Iteration is lexicographic by name so that every traversal (optimizer,
    EMA, checkpoint) visits parameters in the same order.
    """

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}
        self.stats: dict[str, RunningStats] = {}
        self.momentum: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            msg = f"parameter {name} registered twice"
            raise IntegrityError(msg)
        tensor = Tensor(data, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def add_stats(self, name: str, channels: int, dtype: np.dtype | type) -> None:
        self.stats[name] = RunningStats.fresh(channels, dtype)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def num_elements(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.zero_grad()

    def requires_grad_(self, flag: bool) -> ParamSet:
        for tensor in self._params.values():
            tensor.requires_grad = flag
            if not flag:
                tensor.grad = None
        return self

    def momentum_buffer(self, name: str) -> np.ndarray:
        if name not in self.momentum:
            self.momentum[name] = np.zeros_like(self._params[name].data)
        return self.momentum[name]

    def clone(self, requires_grad: bool | None = None) -> ParamSet:
        """Deep copy of values and statistics; momentum and step start fresh."""
        copy = ParamSet()
        for name, tensor in self.items():
            copy.add(name, tensor.data.copy())
        for name, stats in self.stats.items():
            copy.stats[name] = RunningStats(
                stats.mean.copy(), stats.var.copy(), stats.momentum
            )
        if requires_grad is not None:
            copy.requires_grad_(requires_grad)
        return copy

    def check_compatible(self, other: ParamSet) -> None:
        if self.names() != other.names():
            missing = sorted(set(self.names()) ^ set(other.names()))
            msg = f"parameter names differ: {', '.join(missing)}"
            raise IntegrityError(msg)
        for name, tensor in self.items():
            if tensor.shape != other[name].shape:
                msg = f"parameter {name}: shape {list(tensor.shape)} vs {list(other[name].shape)}"
                raise IntegrityError(msg)
        if sorted(self.stats) != sorted(other.stats):
            msg = "norm statistics names differ"
            raise IntegrityError(msg)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in self.items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(tensor.data).tobytes())
        return digest.hexdigest()
