from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ssda_seg.data import IGNORE_INDEX, Batch, SampleSet
from ssda_seg.errors import ConfigurationError, DataError, EmptySetError

log = logging.getLogger(__name__)

REPORT_DIGITS = 6


@dataclass
class ConfusionMatrix:
    """Rows are ground truth, columns prediction."""

    counts: np.ndarray
    ignored: int = 0

    @staticmethod
    def empty(num_classes: int) -> ConfusionMatrix:
        return ConfusionMatrix(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        if other.num_classes != self.num_classes:
            msg = f"cannot add {self.num_classes}-class and {other.num_classes}-class matrices"
            raise ConfigurationError(msg)
        return ConfusionMatrix(self.counts + other.counts, self.ignored + other.ignored)


def accumulate(
    cm: ConfusionMatrix,
    pred: np.ndarray,
    gt: np.ndarray,
    ignore_index: int = IGNORE_INDEX,
) -> ConfusionMatrix:
    if pred.shape != gt.shape:
        msg = f"prediction {list(pred.shape)} and ground truth {list(gt.shape)} differ in shape"
        raise ConfigurationError(msg)
    c = cm.num_classes
    keep = gt != ignore_index
    truth = gt[keep].astype(np.int64)
    guess = pred[keep].astype(np.int64)
    if guess.size and (guess.min() < 0 or guess.max() >= c):
        msg = f"prediction {int(guess.max())} outside 0..{c - 1}"
        raise DataError(msg)
    if truth.size and truth.max() >= c:
        msg = f"ground truth {int(truth.max())} outside 0..{c - 1}"
        raise DataError(msg)
    cm.counts += np.bincount(truth * c + guess, minlength=c * c).reshape(c, c)
    cm.ignored += int((~keep).sum())
    return cm


@dataclass
class IoUReport:
    per_class: np.ndarray  # NaN where the class has zero union
    miou: float
    pixel_accuracy: float = float("nan")


def iou(cm: ConfusionMatrix) -> IoUReport:
    if cm.total == 0:
        msg = "confusion matrix is empty"
        raise EmptySetError(msg)
    tp = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=0) + cm.counts.sum(axis=1) - tp
    with np.errstate(divide="ignore", invalid="ignore"):
        per_class = np.where(union > 0, tp / union, np.nan)
    return IoUReport(per_class, float(np.nanmean(per_class)), pixel_accuracy(cm))


def pixel_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        msg = "confusion matrix is empty"
        raise EmptySetError(msg)
    return float(np.trace(cm.counts) / cm.total)


def format_report(report: IoUReport) -> str:
    """``classXX=`` per class (``nan`` for zero union), then ``miou=`` and ``pixel_acc=``."""
    lines = [
        f"class{index:02d}=" + ("nan" if np.isnan(value) else f"{value:.{REPORT_DIGITS}f}")
        for index, value in enumerate(report.per_class)
    ]
    lines.append(f"miou={report.miou:.{REPORT_DIGITS}f}")
    lines.append(f"pixel_acc={report.pixel_accuracy:.{REPORT_DIGITS}f}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, float]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            msg = f"report line {lineno} is not key=value: {line!r}"
            raise DataError(msg)
        values[key] = float(value)
    return values


def write_report(path: Path, report: IoUReport) -> None:
    path.write_text(format_report(report))
    log.info(f"wrote {path}: miou={report.miou:.4f}")


Predictor = Callable[[np.ndarray], np.ndarray]


def evaluate(
    predict: Predictor, sample_set: SampleSet, batch_size: int = 16
) -> ConfusionMatrix:
    """Confusion matrix of ``predict`` (B x 3 x H x W -> B x H x W) over a labeled set."""
    cm = ConfusionMatrix.empty(sample_set.num_classes)
    for start in range(0, len(sample_set), batch_size):
        items = sample_set.items[start : start + batch_size]
        labels = Batch.labels(items)
        accumulate(cm, predict(Batch.images(items)), labels)
    return cm
