from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ssda_seg.errors import ArgumentError, DataError, EmptySetError

log = logging.getLogger(__name__)

IGNORE_INDEX = 255


class Role(str, Enum):
    SOURCE = "source"
    TARGET_LABELED = "target_labeled"
    TARGET_UNLABELED = "target_unlabeled"
    TARGET_PSEUDOLABELED = "target_pseudolabeled"
    TARGET_POOL = "target"
    VALIDATION = "validation"


@dataclass
class LabeledImage:
    id: str
    image: np.ndarray  # H x W x 3 float32 in [0, 1]
    label: np.ndarray | None = None  # H x W uint8, classes 0..C-1 or IGNORE_INDEX
    pseudo: bool = False

    @property
    def size(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]

    def without_label(self) -> LabeledImage:
        return replace(self, label=None, pseudo=False)


@dataclass
class SampleSet:
    role: Role
    num_classes: int
    items: list[LabeledImage] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[LabeledImage]:
        return iter(self.items)

    @property
    def ids(self) -> list[str]:
        return [item.id for item in self.items]

    @property
    def labeled(self) -> bool:
        return bool(self.items) and all(item.label is not None for item in self.items)

    def class_frequencies(self) -> np.ndarray:
        return class_frequencies(self)


def class_frequencies(sample_set: SampleSet) -> np.ndarray:
    """Fraction of non-ignored pixels per class, ignored pixels excluded."""
    counts = np.zeros(sample_set.num_classes, dtype=np.int64)
    for item in sample_set.items:
        if item.label is None:
            continue
        valid = item.label[item.label != IGNORE_INDEX].astype(np.int64)
        if valid.size and valid.max() >= sample_set.num_classes:
            msg = f"{item.id}: label {int(valid.max())} outside 0..{sample_set.num_classes - 1}"
            raise DataError(msg)
        counts += np.bincount(valid, minlength=sample_set.num_classes)
    total = counts.sum()
    if total == 0:
        msg = f"{sample_set.role.value} set has no labeled pixels"
        raise EmptySetError(msg)
    return counts / total


def split_target(
    pool: SampleSet, n_labeled: int, seed: int
) -> tuple[SampleSet, SampleSet]:
    """Uniform random labeled subset of the pool; the rest loses its labels.

    Both keep the pool's manifest order.
    """
    if not 0 <= n_labeled <= len(pool):
        msg = f"cannot label {n_labeled} of {len(pool)} target images"
        raise ArgumentError(msg)
    rng = np.random.default_rng(seed)
    chosen = set(rng.permutation(len(pool))[:n_labeled].tolist())
    labeled = SampleSet(Role.TARGET_LABELED, pool.num_classes)
    unlabeled = SampleSet(Role.TARGET_UNLABELED, pool.num_classes)
    for index, item in enumerate(pool.items):
        if index in chosen:
            labeled.items.append(replace(item, pseudo=False))
        else:
            unlabeled.items.append(item.without_label())
    log.info(
        f"split target pool: {len(labeled)} labeled, {len(unlabeled)} unlabeled (seed {seed})"
    )
    return labeled, unlabeled


def with_pseudolabels(
    labeled: SampleSet, unlabeled: SampleSet, maps: dict[str, np.ndarray]
) -> SampleSet:
    """Ground-truth labeled items followed by the pseudolabeled unlabeled items."""
    merged = SampleSet(Role.TARGET_PSEUDOLABELED, labeled.num_classes)
    merged.items.extend(labeled.items)
    for item in unlabeled.items:
        if item.id in maps:
            merged.items.append(replace(item, label=maps[item.id], pseudo=True))
    return merged
