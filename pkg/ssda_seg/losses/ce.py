"""Class-weighted cross-entropy and the supervised term over mixed batches."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ssda_seg.data import IGNORE_INDEX, Batch
from ssda_seg.diffcore import ParamSet, Tensor, add, apply_op, concat, slice_batch
from ssda_seg.diffcore.ops import log_softmax_array
from ssda_seg.errors import ConfigurationError, DataError, EmptySetError
from ssda_seg.model import SegOutput, TinySegConfig, forward

from .config import LossConfig

log = logging.getLogger(__name__)


def class_weights(frequencies: np.ndarray) -> np.ndarray:
    """alpha_c = sqrt(median present frequency / f_c); absent classes get the max."""
    f = np.asarray(frequencies, dtype=np.float64)
    present = f > 0
    if not present.any():
        msg = "class frequencies are all zero"
        raise EmptySetError(msg)
    median = np.median(f[present])
    alpha = np.zeros_like(f)
    alpha[present] = np.sqrt(median / f[present])
    alpha[~present] = alpha[present].max()
    return alpha


def _check_labels(labels: np.ndarray, num_classes: int, ignore_index: int) -> np.ndarray:
    valid = labels != ignore_index
    if valid.any():
        counted = labels[valid]
        if counted.min() < 0 or counted.max() >= num_classes:
            msg = f"label {int(counted.max())} outside 0..{num_classes - 1} and not the ignore index"
            raise DataError(msg)
    return valid


def weighted_ce(
    logits: Tensor,
    labels: np.ndarray,
    alpha: np.ndarray,
    ignore_index: int = IGNORE_INDEX,
) -> Tensor:
    """Mean over non-ignored pixels of -alpha_y log softmax(logits)_y."""
    batch, num_classes, height, width = logits.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (batch, height, width):
        msg = f"labels {list(labels.shape)} do not match logits {list(logits.shape)}"
        raise ConfigurationError(msg)
    valid = _check_labels(labels, num_classes, ignore_index)
    n_valid = int(valid.sum())
    if n_valid == 0:
        return apply_op(
            np.zeros((), dtype=logits.dtype),
            (logits,),
            lambda g: (np.zeros_like(logits.data),),
            "weighted_ce",
        )

    safe = np.where(valid, labels, 0)
    logp = log_softmax_array(logits.data.astype(np.float64), axis=1)
    picked = np.take_along_axis(logp, safe[:, None], axis=1)[:, 0]
    weights = np.where(valid, np.asarray(alpha, dtype=np.float64)[safe], 0.0)
    loss = -(weights * picked).sum() / n_valid

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.exp(logp)
        np.put_along_axis(
            grad, safe[:, None], np.take_along_axis(grad, safe[:, None], axis=1) - 1.0, axis=1
        )
        grad *= (weights / n_valid)[:, None]
        return ((g * grad).astype(logits.dtype),)

    return apply_op(np.asarray(loss, dtype=logits.dtype), (logits,), _backward, "weighted_ce")


def soft_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over pixels of -sum_c q_c log p_c; ``targets`` is a constant distribution."""
    if targets.shape != logits.shape:
        msg = f"targets {list(targets.shape)} do not match logits {list(logits.shape)}"
        raise ConfigurationError(msg)
    batch, _, height, width = logits.shape
    count = batch * height * width
    q = targets.astype(np.float64)
    logp = log_softmax_array(logits.data.astype(np.float64), axis=1)
    loss = -(q * logp).sum() / count

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = (np.exp(logp) * q.sum(axis=1, keepdims=True) - q) / count
        return ((g * grad).astype(logits.dtype),)

    return apply_op(np.asarray(loss, dtype=logits.dtype), (logits,), _backward, "soft_ce")


@dataclass
class SupervisedTerms:
    source: Tensor | None
    target: Tensor | None
    output: SegOutput | None
    n_source: int

    @property
    def total(self) -> Tensor | None:
        terms = [t for t in (self.source, self.target) if t is not None]
        if not terms:
            return None
        out = terms[0]
        for t in terms[1:]:
            out = add(out, t)
        return out


def _slice_output(output: SegOutput, start: int, stop: int) -> SegOutput:
    return SegOutput(
        slice_batch(output.logits, start, stop),
        slice_batch(output.embeddings, start, stop),
        slice_batch(output.head_logits, start, stop),
    )


def supervised_terms(
    student: ParamSet,
    source_images: np.ndarray | None,
    source_labels: np.ndarray | None,
    target_images: np.ndarray | None,
    target_labels: np.ndarray | None,
    cfg: LossConfig,
    model_config: TinySegConfig,
) -> SupervisedTerms:
    """lambda_s Q(source) and lambda_t Q(target) from one mixed forward pass.

    With ``cfg.batch_mix`` off the two domains are forwarded separately and
    so normalized with separate batch statistics. A domain with zero weight
    is left out of the forward pass.
    """
    c = model_config.num_classes
    candidates = {
        "source": (source_images, source_labels, cfg.alpha("source", c), cfg.lambda_s),
        "target": (target_images, target_labels, cfg.alpha("target", c), cfg.lambda_t),
    }
    present = {
        domain: part
        for domain, part in candidates.items()
        if part[0] is not None and len(part[0]) and part[3] > 0
    }
    if not present:
        return SupervisedTerms(None, None, None, 0)
    for domain, (_, labels, _, _) in present.items():
        if labels is None:
            msg = f"{domain} images were given without labels"
            raise ConfigurationError(msg)

    if cfg.batch_mix:
        output = forward(
            student,
            np.concatenate([images for images, *_ in present.values()], axis=0),
            "train",
            model_config,
        )
        outputs = {}
        offset = 0
        for domain, (images, *_) in present.items():
            outputs[domain] = _slice_output(output, offset, offset + len(images))
            offset += len(images)
    else:
        outputs = {
            domain: forward(student, images, "train", model_config)
            for domain, (images, *_) in present.items()
        }
        output = _concat_outputs(list(outputs.values()))

    terms = {
        domain: weighted_ce(outputs[domain].logits, labels, alpha, cfg.ignore_index) * weight
        for domain, (_, labels, alpha, weight) in present.items()
    }
    n_source = len(present["source"][0]) if "source" in present else 0
    return SupervisedTerms(terms.get("source"), terms.get("target"), output, n_source)


def _concat_outputs(outputs: list[SegOutput]) -> SegOutput:
    if len(outputs) == 1:
        return outputs[0]
    return SegOutput(
        concat([o.logits for o in outputs]),
        concat([o.embeddings for o in outputs]),
        concat([o.head_logits for o in outputs]),
    )


def sup_loss(
    student: ParamSet, batch: Batch, cfg: LossConfig, model_config: TinySegConfig
) -> Tensor:
    """lambda_s Q(f(x_s), y_s) + lambda_t Q(f(x_t), y_t) over a mixed batch."""
    terms = supervised_terms(
        student,
        Batch.images(batch.source) if batch.source else None,
        Batch.labels(batch.source) if batch.source else None,
        Batch.images(batch.target_labeled) if batch.target_labeled else None,
        Batch.labels(batch.target_labeled) if batch.target_labeled else None,
        cfg,
        model_config,
    )
    if terms.total is None:
        msg = "batch holds no labeled images"
        raise ConfigurationError(msg)
    return terms.total
