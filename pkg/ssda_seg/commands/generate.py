import logging
from pathlib import Path

import numpy as np

from ssda_seg.data import Dataset, generate_dataset, save_dataset
from ssda_seg.errors import UsageError
from ssda_seg.settings import RunConfig

log = logging.getLogger(__name__)


def format_frequencies(dataset: Dataset) -> str:
    lines = []
    for name, sample_set in (
        ("source", dataset.source),
        ("target", dataset.target),
        ("validation", dataset.validation),
    ):
        if len(sample_set) == 0:
            continue
        freqs = sample_set.class_frequencies()
        cells = " ".join(f"{f:.4f}" for f in freqs)
        lines.append(f"{name:<10} {cells}  (sum {float(np.sum(freqs)):.6f})")
    return "\n".join(lines)


def generate_command(config: RunConfig, out: Path, force: bool = False) -> Dataset:
    """Render the dataset described by ``config`` into ``out``."""
    if out.exists() and any(out.iterdir()) and not force:
        msg = f"{out} exists and is not empty, pass --force to overwrite"
        raise UsageError(msg)
    dataset = generate_dataset(config.dataset_meta())
    save_dataset(out, dataset)
    print(format_frequencies(dataset))
    return dataset
