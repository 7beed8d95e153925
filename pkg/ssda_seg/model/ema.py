from __future__ import annotations

import logging
from dataclasses import dataclass

from ssda_seg.diffcore import ParamSet

log = logging.getLogger(__name__)

MU_CAP = 0.995


def mu_schedule(step: int, cap: float = MU_CAP) -> float:
    """EMA decay min(cap, (step + 1) / (step + 10))."""
    return min(cap, (step + 1) / (step + 10))


@dataclass
class ModelPair:
    student: ParamSet
    teacher: ParamSet
    step: int = 0
    mu_cap: float = MU_CAP

    @staticmethod
    def from_student(student: ParamSet, mu_cap: float = MU_CAP) -> ModelPair:
        # the teacher never enters a differentiation graph
        return ModelPair(student, student.clone(requires_grad=False), 0, mu_cap)

    def mu(self) -> float:
        return mu_schedule(self.step, self.mu_cap)


def ema_update(pair: ModelPair, mu: float | None = None) -> float:
    """xi = mu * xi + (1 - mu) * theta for every parameter and norm statistic.

    Returns the coefficient that was applied and advances ``pair.step``.
    """
    pair.student.check_compatible(pair.teacher)
    coeff = pair.mu() if mu is None else mu
    for name, theta in pair.student.items():
        xi = pair.teacher[name]
        xi.data = (coeff * xi.data + (1.0 - coeff) * theta.data).astype(xi.dtype)
    for name, stats in pair.student.stats.items():
        target = pair.teacher.stats[name]
        target.mean = (coeff * target.mean + (1.0 - coeff) * stats.mean).astype(
            target.mean.dtype
        )
        target.var = (coeff * target.var + (1.0 - coeff) * stats.var).astype(
            target.var.dtype
        )
    pair.step += 1
    return coeff
