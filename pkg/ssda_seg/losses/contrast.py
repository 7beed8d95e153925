"""Supervised pixel contrast over a hard-example-sampled pool of embeddings."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ssda_seg.data import IGNORE_INDEX
from ssda_seg.diffcore import Tensor, apply_op, concat, pixels, take_rows
from ssda_seg.errors import ConfigurationError

log = logging.getLogger(__name__)


@dataclass
class ContrastSample:
    embeddings: Tensor  # A x D, unit rows
    labels: np.ndarray  # A

    @property
    def anchors(self) -> int:
        return len(self.labels)


def downsample_labels(labels: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbour reduction to embedding resolution (top-left pixel of each cell)."""
    return labels[:, ::factor, ::factor]


def select_pixels(
    labels: np.ndarray,
    class_probs: np.ndarray,
    n_pix: int,
    rng: np.random.Generator,
    ignore_index: int = IGNORE_INDEX,
) -> np.ndarray:
    """Flat indices (row-major over B x h x w) of up to n_pix pixels per present class.

    The ceil(n_pix / 2) pixels with the lowest predicted probability of
    their own class come first; the rest are drawn uniformly from the
    remaining pixels of that class.
    """
    flat_labels = labels.reshape(-1)
    flat_probs = class_probs.transpose(0, 2, 3, 1).reshape(len(flat_labels), -1)
    n_hard = math.ceil(n_pix / 2)
    chosen = []
    for cls in np.unique(flat_labels):
        if cls == ignore_index:
            continue
        members = np.flatnonzero(flat_labels == cls)
        if len(members) <= n_pix:
            chosen.append(members)
            continue
        order = np.argsort(flat_probs[members, cls], kind="stable")
        hard = members[order[:n_hard]]
        rest = members[order[n_hard:]]
        easy = rng.choice(rest, size=n_pix - n_hard, replace=False)
        chosen.append(np.concatenate([hard, np.sort(easy)]))
    if not chosen:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(chosen).astype(np.int64)


def sample_contrast(
    embeddings: Tensor,
    labels: np.ndarray,
    class_probs: np.ndarray,
    n_pix: int,
    rng: np.random.Generator,
    ignore_index: int = IGNORE_INDEX,
) -> ContrastSample:
    """Pool from B x D x h x w embeddings with labels and class probabilities at the same resolution."""
    b, _, h, w = embeddings.shape
    if labels.shape != (b, h, w) or class_probs.shape[0] != b or class_probs.shape[2:] != (h, w):
        msg = f"labels {list(labels.shape)} and probabilities {list(class_probs.shape)} must match embeddings {list(embeddings.shape)}"
        raise ConfigurationError(msg)
    index = select_pixels(labels, class_probs, n_pix, rng, ignore_index)
    rows = take_rows(pixels(embeddings), index)
    return ContrastSample(rows, labels.reshape(-1)[index].astype(np.int64))


def merge_samples(samples: list[ContrastSample]) -> ContrastSample:
    return ContrastSample(
        concat([s.embeddings for s in samples]),
        np.concatenate([s.labels for s in samples]),
    )


def pixel_contrast_loss(sample: ContrastSample, temperature: float) -> Tensor:
    """Mean over anchors with a positive of the averaged per-positive InfoNCE terms.

    For anchor j with positive p the term is
    ``log(1 + sum_n exp(s_jn - s_jp))`` where ``s = z z^T / t`` and ``n``
    ranges over the anchor's negatives; it is computed as
    ``logaddexp(0, lse_n(s_jn) - s_jp)``.
    """
    if temperature <= 0:
        msg = f"contrast temperature must be positive, got {temperature}"
        raise ConfigurationError(msg)
    z = sample.embeddings
    if sample.anchors == 0:
        return apply_op(np.zeros((), dtype=z.dtype), (z,), lambda g: (np.zeros_like(z.data),), "pixel_contrast")

    zz = z.data.astype(np.float64)
    sim = zz @ zz.T / temperature
    y = sample.labels
    positive = (y[:, None] == y[None, :]) & ~np.eye(len(y), dtype=bool)
    negative = y[:, None] != y[None, :]
    n_pos = positive.sum(axis=1)
    valid = n_pos > 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        return apply_op(np.zeros((), dtype=z.dtype), (z,), lambda g: (np.zeros_like(z.data),), "pixel_contrast")

    has_neg = negative.any(axis=1)
    row_max = np.where(has_neg, np.where(negative, sim, -np.inf).max(axis=1), 0.0)
    neg_sum = np.exp(np.where(negative, sim - row_max[:, None], -np.inf)).sum(axis=1)
    with np.errstate(divide="ignore"):
        neg_lse = np.where(has_neg, row_max + np.log(neg_sum), -np.inf)

    u = neg_lse[:, None] - sim
    terms = np.where(positive, np.logaddexp(0.0, u), 0.0)
    per_anchor = np.where(valid, terms.sum(axis=1) / np.maximum(n_pos, 1), 0.0)
    loss = per_anchor.sum() / n_valid

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        coeff = np.where(valid, 1.0 / (np.maximum(n_pos, 1) * n_valid), 0.0)
        sig = np.where(positive, expit(u), 0.0)
        safe_lse = np.where(has_neg, neg_lse, 0.0)
        neg_weights = np.exp(np.where(negative, sim - safe_lse[:, None], -np.inf))
        grad_sim = (-sig + neg_weights * sig.sum(axis=1, keepdims=True)) * coeff[:, None]
        grad_z = (grad_sim + grad_sim.T) @ zz / temperature
        return ((g * grad_z).astype(z.dtype),)

    return apply_op(np.asarray(loss, dtype=z.dtype), (z,), _backward, "pixel_contrast")
