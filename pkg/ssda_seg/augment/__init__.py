from .pipeline import (
    RANDAUGMENT_OPS,
    AugConfig,
    StrongBatch,
    color_augment,
    cutmix,
    gaussian_blur,
    randaugment_op,
    strong_augment,
    strong_augment_batch,
)
from .styling import LabStats, lab_stats, lab_style, lab_transfer, style_batch

__all__ = [
    "RANDAUGMENT_OPS",
    "AugConfig",
    "LabStats",
    "StrongBatch",
    "color_augment",
    "cutmix",
    "gaussian_blur",
    "lab_stats",
    "lab_style",
    "lab_transfer",
    "randaugment_op",
    "strong_augment",
    "strong_augment_batch",
    "style_batch",
]
