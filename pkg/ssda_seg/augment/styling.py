"""Per-channel CIELAB statistics transfer from a target image onto a source image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.color import lab2rgb, rgb2lab

SIGMA_EPS = 1e-6


@dataclass(frozen=True)
class LabStats:
    mean: np.ndarray  # L, a, b
    std: np.ndarray

    @staticmethod
    def of(lab: np.ndarray) -> LabStats:
        flat = lab.reshape(-1, 3)
        return LabStats(flat.mean(axis=0), flat.std(axis=0))


def lab_stats(image: np.ndarray) -> LabStats:
    return LabStats.of(rgb2lab(image.astype(np.float64)))


def lab_transfer(source_lab: np.ndarray, target: LabStats, eps: float = SIGMA_EPS) -> np.ndarray:
    """Standardize with the source's own stats, re-affine with the target's (LAB in, LAB out)."""
    own = LabStats.of(source_lab)
    return (source_lab - own.mean) / np.maximum(own.std, eps) * target.std + target.mean


def lab_style(source: np.ndarray, target: np.ndarray, eps: float = SIGMA_EPS) -> np.ndarray:
    styled = lab_transfer(rgb2lab(source.astype(np.float64)), lab_stats(target), eps)
    return np.clip(lab2rgb(styled), 0.0, 1.0).astype(source.dtype)


def style_batch(
    sources: list[np.ndarray], targets: list[np.ndarray], rng: np.random.Generator
) -> list[np.ndarray]:
    """Restyle every source image after a random target image of the same batch."""
    if not targets:
        return [s.copy() for s in sources]
    return [lab_style(s, targets[int(rng.integers(len(targets)))]) for s in sources]
