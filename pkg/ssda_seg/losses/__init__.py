from .ce import class_weights, soft_cross_entropy, sup_loss, supervised_terms, weighted_ce
from .config import LossConfig
from .consistency import consistency_loss, cr_onehot, cr_prob, mix_targets, onehot_targets
from .contrast import ContrastSample, downsample_labels, pixel_contrast_loss, sample_contrast
from .objectives import (
    LossBreakdown,
    Objective,
    SSDAObjective,
    SSLObjective,
    UDAObjective,
    objective_for,
    total_loss,
)

__all__ = [
    "ContrastSample",
    "LossBreakdown",
    "LossConfig",
    "Objective",
    "SSDAObjective",
    "SSLObjective",
    "UDAObjective",
    "class_weights",
    "consistency_loss",
    "cr_onehot",
    "cr_prob",
    "downsample_labels",
    "mix_targets",
    "objective_for",
    "onehot_targets",
    "pixel_contrast_loss",
    "sample_contrast",
    "soft_cross_entropy",
    "sup_loss",
    "supervised_terms",
    "total_loss",
    "weighted_ce",
]
