"""Offline pseudolabels: teacher argmax where its confidence reaches tau, ignore elsewhere."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ssda_seg.data import IGNORE_INDEX, SampleSet, load_pseudolabels, write_label_map
from ssda_seg.data.sampler import Batch
from ssda_seg.diffcore import ParamSet, softmax_array
from ssda_seg.errors import ArgumentError, DataError, IntegrityError
from ssda_seg.model import TinySegConfig, forward

log = logging.getLogger(__name__)

COVERAGE_FILE = "coverage.txt"


@dataclass
class PseudoLabelSet:
    maps: dict[str, np.ndarray] = field(default_factory=dict)
    coverage: dict[str, float] = field(default_factory=dict)
    provenance: str = ""
    tau: float = 0.9

    @property
    def total_coverage(self) -> float:
        labeled = sum(int((m != IGNORE_INDEX).sum()) for m in self.maps.values())
        total = sum(m.size for m in self.maps.values())
        return labeled / total if total else 0.0

    def require_provenance(self, expected: str) -> None:
        if self.provenance != expected:
            msg = f"pseudolabels come from checkpoint {self.provenance[:12] or '?'}, expected {expected[:12]}"
            raise IntegrityError(msg)


def label_with_confidence(probs: np.ndarray, tau: float) -> np.ndarray:
    """B x C x H x W probabilities to uint8 maps; below-tau pixels become the ignore index."""
    hard = probs.argmax(axis=1)
    confident = probs.max(axis=1) >= tau
    return np.where(confident, hard, IGNORE_INDEX).astype(np.uint8)


def generate_pseudolabels(
    model: ParamSet,
    unlabeled: SampleSet,
    tau: float,
    model_config: TinySegConfig,
    provenance: str = "",
    batch_size: int = 16,
) -> PseudoLabelSet:
    if not 0.0 < tau <= 1.0:
        msg = f"confidence threshold tau={tau} must lie in (0, 1]"
        raise ArgumentError(msg)
    result = PseudoLabelSet(provenance=provenance, tau=tau)
    for start in range(0, len(unlabeled), batch_size):
        items = unlabeled.items[start : start + batch_size]
        logits = forward(model, Batch.images(items), "eval", model_config).logits.data
        maps = label_with_confidence(softmax_array(logits.astype(np.float64), axis=1), tau)
        for item, label in zip(items, maps, strict=True):
            result.maps[item.id] = label
            result.coverage[item.id] = float((label != IGNORE_INDEX).mean())
    log.info(
        f"pseudolabeled {len(result.maps)} images at tau={tau}: coverage {result.total_coverage:.3f}"
    )
    return result


def write_pseudolabels(directory: Path, pseudolabels: PseudoLabelSet) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# provenance sha256={pseudolabels.provenance}",
        f"# tau={pseudolabels.tau}",
        f"# total={pseudolabels.total_coverage:.6f}",
    ]
    for item_id, label in pseudolabels.maps.items():
        write_label_map(directory / f"{item_id}.pgm", label)
        lines.append(f"{item_id} {pseudolabels.coverage[item_id]:.6f}")
    (directory / COVERAGE_FILE).write_text("\n".join(lines) + "\n")


def read_pseudolabels(directory: Path, num_classes: int) -> PseudoLabelSet:
    maps = load_pseudolabels(directory, num_classes)
    result = PseudoLabelSet(maps=maps)
    for line in (directory / COVERAGE_FILE).read_text().splitlines():
        if line.startswith("# provenance sha256="):
            result.provenance = line.partition("=")[2]
        elif line.startswith("# tau="):
            result.tau = float(line.partition("=")[2])
        elif line and not line.startswith("#"):
            item_id, _, value = line.partition(" ")
            result.coverage[item_id] = float(value)
    if set(result.coverage) != set(maps):
        msg = f"{directory / COVERAGE_FILE} does not list exactly the stored maps"
        raise DataError(msg)
    return result
