import numpy as np

from ssda_seg.augment import AugConfig
from ssda_seg.data import Batch, Setting
from ssda_seg.model import ModelPair, TinySegConfig

from ..config import LossConfig
from .objective import LossBreakdown, Objective
from .ssda import SSDAObjective
from .ssl import SSLObjective
from .uda import UDAObjective

OBJECTIVES: dict[Setting, type[Objective]] = {
    Setting.SSDA: SSDAObjective,
    Setting.UDA: UDAObjective,
    Setting.SSL: SSLObjective,
}


def objective_for(
    setting: Setting,
    loss_config: LossConfig,
    aug_config: AugConfig,
    model_config: TinySegConfig,
) -> Objective:
    return OBJECTIVES[setting](loss_config, aug_config, model_config)


def total_loss(
    step: int,
    setting: Setting,
    batch: Batch,
    pair: ModelPair,
    loss_config: LossConfig,
    model_config: TinySegConfig,
    rng: np.random.Generator,
    aug_config: AugConfig | None = None,
) -> LossBreakdown:
    """L = L_sup + lambda_1 L_cr + lambda_2 L_pc for the given setting."""
    objective = objective_for(setting, loss_config, aug_config or AugConfig(), model_config)
    return objective.run(step, batch, pair, rng)


__all__ = [
    "OBJECTIVES",
    "LossBreakdown",
    "Objective",
    "SSDAObjective",
    "SSLObjective",
    "UDAObjective",
    "objective_for",
    "total_loss",
]
