from __future__ import annotations

import math
from dataclasses import dataclass

from ssda_seg.errors import ConfigurationError


@dataclass(frozen=True)
class SelfTrainPlan:
    rounds: int = 2
    n_steps: int = 2000
    n_drop: int = 1000
    tau: float = 0.9
    lr: float = 1e-2
    lr_drop_at: float = 0.75
    lr_drop_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    clip_norm: float = 10.0
    no_pl_drop: bool = False
    warm_start: bool = False

    def validate(self) -> None:
        if self.rounds < 0:
            msg = f"rounds={self.rounds} must be >= 0"
            raise ConfigurationError(msg)
        if not 0 < self.n_drop < self.n_steps:
            msg = f"n_drop={self.n_drop} must lie strictly between 0 and n_steps={self.n_steps}"
            raise ConfigurationError(msg)
        if not 0.0 < self.tau <= 1.0:
            msg = f"tau={self.tau} must lie in (0, 1]"
            raise ConfigurationError(msg)
        if self.lr <= 0:
            msg = f"lr={self.lr} must be positive"
            raise ConfigurationError(msg)

    @property
    def lr_drop_step(self) -> int:
        return math.ceil(self.lr_drop_at * self.n_steps)

    def lr_at(self, step: int) -> float:
        if step >= self.lr_drop_step:
            return self.lr * self.lr_drop_factor
        return self.lr

    def uses_pseudolabels(self, step: int) -> bool:
        return self.no_pl_drop or step < self.n_drop

    @property
    def total_steps(self) -> int:
        return (self.rounds + 1) * self.n_steps
