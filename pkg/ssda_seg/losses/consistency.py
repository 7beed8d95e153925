"""Consistency between the student on a strong view and the EMA teacher on the clean image."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ssda_seg.augment import AugConfig, strong_augment_batch
from ssda_seg.diffcore import ParamSet, Tensor, softmax_array
from ssda_seg.model import SegOutput, TinySegConfig, forward

from .ce import soft_cross_entropy

log = logging.getLogger(__name__)


def teacher_probabilities(
    teacher: ParamSet, images: np.ndarray, model_config: TinySegConfig
) -> np.ndarray:
    """Teacher softmax on clean images; eval-mode, outside any graph."""
    logits = forward(teacher, images, "eval", model_config).logits.data
    return softmax_array(logits.astype(np.float64), axis=1)


def onehot_targets(probs: np.ndarray) -> np.ndarray:
    """Per-pixel argmax as one-hot; ties resolve to the lowest class index."""
    hard = probs.argmax(axis=1)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, hard[:, None], 1.0, axis=1)
    return onehot


def mix_targets(probs: np.ndarray, masks: np.ndarray, partners: list[int]) -> np.ndarray:
    """Inside each CutMix mask the target comes from the partner image."""
    mixed = probs.copy()
    for index, partner in enumerate(partners):
        mixed[index][:, masks[index]] = probs[partner][:, masks[index]]
    return mixed


@dataclass
class ConsistencyResult:
    loss: Tensor
    student: SegOutput
    targets: np.ndarray  # B x C x H x W, the mixed pseudo-targets


def consistency_loss(
    student: ParamSet,
    teacher: ParamSet,
    images: np.ndarray,
    variant: Literal["onehot", "prob"],
    rng: np.random.Generator,
    model_config: TinySegConfig,
    aug_config: AugConfig | None = None,
) -> ConsistencyResult:
    """Strong-augment ``images`` (B x 3 x H x W), score the student against teacher targets."""
    clean = [image.transpose(1, 2, 0) for image in images]
    strong = strong_augment_batch(clean, rng, aug_config)
    probs = teacher_probabilities(teacher, images, model_config)
    if variant == "onehot":
        probs = onehot_targets(probs)
    targets = mix_targets(probs, strong.masks, strong.partners)
    output = forward(student, strong.views.astype(images.dtype), "train", model_config)
    return ConsistencyResult(soft_cross_entropy(output.logits, targets), output, targets)


def cr_onehot(
    student: ParamSet,
    teacher: ParamSet,
    images: np.ndarray,
    rng: np.random.Generator,
    model_config: TinySegConfig,
    aug_config: AugConfig | None = None,
) -> Tensor:
    return consistency_loss(student, teacher, images, "onehot", rng, model_config, aug_config).loss


def cr_prob(
    student: ParamSet,
    teacher: ParamSet,
    images: np.ndarray,
    rng: np.random.Generator,
    model_config: TinySegConfig,
    aug_config: AugConfig | None = None,
) -> Tensor:
    return consistency_loss(student, teacher, images, "prob", rng, model_config, aug_config).loss
