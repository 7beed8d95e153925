from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ssda_seg.errors import ConfigurationError

from .sampleset import LabeledImage, SampleSet

log = logging.getLogger(__name__)


class Setting(str, Enum):
    SSDA = "ssda"
    UDA = "uda"
    SSL = "ssl"


@dataclass(frozen=True)
class BatchCounts:
    source: int = 2
    target_labeled: int = 2
    target_unlabeled: int = 2


@dataclass
class TrainingSets:
    source: SampleSet | None
    target_labeled: SampleSet
    target_unlabeled: SampleSet


@dataclass
class Batch:
    source: list[LabeledImage] = field(default_factory=list)
    target_labeled: list[LabeledImage] = field(default_factory=list)
    target_unlabeled: list[LabeledImage] = field(default_factory=list)

    @staticmethod
    def images(items: list[LabeledImage]) -> np.ndarray:
        """Stack to B x 3 x H x W float32."""
        return np.stack([item.image.transpose(2, 0, 1) for item in items]).astype(np.float32)

    @staticmethod
    def labels(items: list[LabeledImage]) -> np.ndarray:
        stacked = []
        for item in items:
            if item.label is None:
                msg = f"item {item.id} has no label but is used for supervision"
                raise ConfigurationError(msg)
            stacked.append(item.label.astype(np.int64))
        return np.stack(stacked)


class _Cursor:
    """Shuffled pass over one set; reshuffles at every epoch boundary."""

    def __init__(self, size: int, rng: np.random.Generator) -> None:
        self.size = size
        self.rng = rng
        self.order = rng.permutation(size)
        self.position = 0

    def take(self, count: int) -> list[int]:
        picked = []
        for _ in range(count):
            if self.position == self.size:
                self.order = self.rng.permutation(self.size)
                self.position = 0
            picked.append(int(self.order[self.position]))
            self.position += 1
        return picked


def random_crop(
    image: np.ndarray, label: np.ndarray | None, crop: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray | None]:
    height, width = image.shape[:2]
    if crop >= height and crop >= width:
        return image, label
    top = int(rng.integers(0, height - crop + 1))
    left = int(rng.integers(0, width - crop + 1))
    window = (slice(top, top + crop), slice(left, left + crop))
    return image[window], None if label is None else label[window]


class BatchSampler:
    """Mixed batches over source, labeled target (or its pseudolabeled extension) and unlabeled target.

    Sampling is with replacement across epochs: every set has its own
    shuffled cursor, so the delivered sequence depends only on the seed.
    """

    STREAM_SOURCE = 0
    STREAM_TARGET = 1
    STREAM_UNLABELED = 2
    STREAM_AUGMENT = 3

    def __init__(
        self,
        sets: TrainingSets,
        setting: Setting,
        seed: int,
        counts: BatchCounts | None = None,
        crop: int | None = None,
        require_unlabeled: bool = True,
    ) -> None:
        self.sets = sets
        self.setting = setting
        self.seed = seed
        self.counts = counts or BatchCounts()
        self.crop = crop
        self.require_unlabeled = require_unlabeled
        self._check_required()
        self._cursors: dict[str, _Cursor] = {}
        self._aug_rng = np.random.default_rng([seed, self.STREAM_AUGMENT])
        if self._uses_source:
            self._cursors["source"] = self._cursor(len(self.source_set), self.STREAM_SOURCE)
        if len(sets.target_labeled):
            self._cursors["target_labeled"] = self._cursor(
                len(sets.target_labeled), self.STREAM_TARGET
            )
        if len(sets.target_unlabeled):
            self._cursors["target_unlabeled"] = self._cursor(
                len(sets.target_unlabeled), self.STREAM_UNLABELED
            )

    def _cursor(self, size: int, stream: int) -> _Cursor:
        return _Cursor(size, np.random.default_rng([self.seed, stream]))

    @property
    def _uses_source(self) -> bool:
        return self.setting is not Setting.SSL

    @property
    def source_set(self) -> SampleSet:
        if self.sets.source is None:
            msg = f"setting {self.setting.value} needs a source set"
            raise ConfigurationError(msg)
        return self.sets.source

    def _check_required(self) -> None:
        required: list[tuple[str, SampleSet | None]] = []
        if self.setting is not Setting.SSL:
            required.append(("source", self.sets.source))
        if self.setting is not Setting.UDA:
            required.append(("target_labeled", self.sets.target_labeled))
        if self.require_unlabeled:
            required.append(("target_unlabeled", self.sets.target_unlabeled))
        for name, sample_set in required:
            if sample_set is None or len(sample_set) == 0:
                msg = f"setting {self.setting.value} requires a non-empty {name} set"
                raise ConfigurationError(msg)

    def set_target_labeled(self, target_labeled: SampleSet) -> None:
        """Swap the labeled-target stream, e.g. back to ground truth only at n_drop."""
        self.sets.target_labeled = target_labeled
        self._check_required()
        if len(target_labeled):
            self._cursors["target_labeled"] = self._cursor(
                len(target_labeled), self.STREAM_TARGET
            )
        else:
            self._cursors.pop("target_labeled", None)
        log.debug(f"labeled target stream now holds {len(target_labeled)} images")

    def _prepare(self, item: LabeledImage) -> LabeledImage:
        image, label = item.image, item.label
        if self.crop is not None:
            image, label = random_crop(image, label, self.crop, self._aug_rng)
        if self._aug_rng.uniform() < 0.5:
            image = image[:, ::-1]
            label = None if label is None else label[:, ::-1]
        return LabeledImage(
            item.id,
            np.ascontiguousarray(image),
            None if label is None else np.ascontiguousarray(label),
            item.pseudo,
        )

    def _draw(self, name: str, sample_set: SampleSet | None, count: int) -> list[LabeledImage]:
        cursor = self._cursors.get(name)
        if cursor is None or sample_set is None:
            return []
        return [self._prepare(sample_set.items[i]) for i in cursor.take(count)]

    def next_batch(self) -> Batch:
        return Batch(
            source=self._draw("source", self.sets.source, self.counts.source)
            if self._uses_source
            else [],
            target_labeled=self._draw(
                "target_labeled", self.sets.target_labeled, self.counts.target_labeled
            ),
            target_unlabeled=self._draw(
                "target_unlabeled", self.sets.target_unlabeled, self.counts.target_unlabeled
            ),
        )
