"""Procedural two-domain scenes: background bands plus layered primitives,
one semantic class per primitive type.

The target domain is the source renderer followed by a parameterized gap
(channel mixing, per-channel gamma, texture noise, class-frequency skew).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from ssda_seg.errors import ArgumentError

from .sampleset import LabeledImage, Role, SampleSet

log = logging.getLogger(__name__)

PRIMITIVES = ("rectangle", "ellipse", "bar", "triangle")
BASE_PALETTE = (
    (0.45, 0.55, 0.40),
    (0.80, 0.25, 0.20),
    (0.20, 0.35, 0.80),
    (0.90, 0.80, 0.25),
    (0.60, 0.30, 0.70),
    (0.25, 0.75, 0.70),
)
GAMMA_DIRECTIONS = np.array([0.5, -0.4, 0.3])
BASE_NOISE = 0.02
OBJECTS_PER_CLASS = 1.2
STREAMS = {Role.SOURCE: 0, Role.TARGET_POOL: 1, Role.VALIDATION: 2}


@dataclass(frozen=True)
class GapParams:
    color_shift: float = 0.0
    gamma: float = 0.0
    noise: float = 0.0
    freq_skew: float = 0.0

    @staticmethod
    def preset(name: str) -> GapParams:
        try:
            return GAP_PRESETS[name]
        except KeyError:
            msg = f"unknown gap preset {name!r}, expected one of {', '.join(GAP_PRESETS)}"
            raise ArgumentError(msg) from None

    @property
    def is_zero(self) -> bool:
        return self == GapParams()


GAP_PRESETS = {
    "none": GapParams(),
    "small": GapParams(color_shift=0.2, gamma=0.3, noise=0.03, freq_skew=0.3),
    "large": GapParams(color_shift=0.6, gamma=0.8, noise=0.08, freq_skew=1.0),
}


def class_palette(num_classes: int) -> np.ndarray:
    colors = list(BASE_PALETTE)
    extra = np.random.default_rng(12345)
    while len(colors) < num_classes:
        colors.append(tuple(extra.uniform(0.1, 0.9, size=3)))
    return np.asarray(colors[:num_classes], dtype=np.float64)


def class_rates(num_classes: int, skew: float) -> np.ndarray:
    """Expected object count per foreground class; skew tilts it toward high classes."""
    foreground = num_classes - 1
    position = np.linspace(-1.0, 1.0, foreground) if foreground > 1 else np.zeros(1)
    return OBJECTS_PER_CLASS * np.exp(skew * position)


def _to_rgb8(color: np.ndarray) -> tuple[int, int, int]:
    r, g, b = (int(round(255 * float(np.clip(c, 0.0, 1.0)))) for c in color)
    return r, g, b


def _primitive_geometry(
    kind: str, rng: np.random.Generator, size: int
) -> tuple[str, list[float] | list[tuple[float, float]]]:
    cy, cx = rng.uniform(0, size, size=2)
    if kind == "rectangle":
        h, w = rng.uniform(size / 8, size / 3, size=2)
        return "rectangle", [cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2]
    if kind == "ellipse":
        ry, rx = rng.uniform(size / 10, size / 5, size=2)
        return "ellipse", [cx - rx, cy - ry, cx + rx, cy + ry]
    if kind == "bar":
        thickness = rng.uniform(size / 16, size / 10)
        length = rng.uniform(size / 2, size)
        if rng.uniform() < 0.5:
            return "rectangle", [cx - length / 2, cy - thickness / 2, cx + length / 2, cy + thickness / 2]
        return "rectangle", [cx - thickness / 2, cy - length / 2, cx + thickness / 2, cy + length / 2]
    radius = rng.uniform(size / 8, size / 4)
    angle = rng.uniform(0, 2 * np.pi)
    points = [
        (
            float(cx + radius * np.cos(angle + k * 2 * np.pi / 3)),
            float(cy + radius * np.sin(angle + k * 2 * np.pi / 3)),
        )
        for k in range(3)
    ]
    return "polygon", points


def _draw_primitive(
    kind: str,
    rng: np.random.Generator,
    size: int,
    draws: tuple[ImageDraw.ImageDraw, ImageDraw.ImageDraw],
    fills: tuple[tuple[int, int, int], int],
) -> None:
    # same geometry on image and label keeps labels pixel-accurate
    method, geometry = _primitive_geometry(kind, rng, size)
    for draw, fill in zip(draws, fills, strict=True):
        getattr(draw, method)(geometry, fill=fill)


def render_scene(
    rng: np.random.Generator, size: int, num_classes: int, gap: GapParams
) -> tuple[np.ndarray, np.ndarray]:
    """One image (H x W x 3 float32, 8-bit quantized) and its label map."""
    palette = class_palette(num_classes)
    image = Image.new("RGB", (size, size))
    label = Image.new("L", (size, size), 0)
    draw_image, draw_label = ImageDraw.Draw(image), ImageDraw.Draw(label)

    n_bands = int(rng.integers(2, 5))
    edges = np.sort(rng.uniform(0, size, size=n_bands - 1))
    bounds = [0.0, *edges.tolist(), float(size)]
    for top, bottom in zip(bounds[:-1], bounds[1:], strict=True):
        shade = palette[0] * rng.uniform(0.75, 1.25)
        draw_image.rectangle([0, top, size, bottom], fill=_to_rgb8(shade))

    counts = rng.poisson(class_rates(num_classes, gap.freq_skew))
    order = [c for c in range(1, num_classes) for _ in range(min(int(counts[c - 1]), 3))]
    rng.shuffle(order)
    for cls in order:
        kind = PRIMITIVES[(cls - 1) % len(PRIMITIVES)]
        color = palette[cls] + rng.normal(0.0, 0.05, size=3)
        _draw_primitive(
            kind, rng, size, (draw_image, draw_label), (_to_rgb8(color), cls)
        )

    pixels = np.asarray(image, dtype=np.float64) / 255.0
    pixels = apply_gap(pixels, gap, rng)
    quantized = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    return quantized.astype(np.float32) / 255.0, np.asarray(label, dtype=np.uint8)


def apply_gap(
    pixels: np.ndarray, gap: GapParams, rng: np.random.Generator
) -> np.ndarray:
    s = gap.color_shift
    out = (1.0 - s) * pixels + s * pixels[..., [2, 0, 1]]
    exponents = np.exp(gap.gamma * GAMMA_DIRECTIONS)
    out = np.clip(out, 0.0, 1.0) ** exponents
    amplitude = BASE_NOISE + gap.noise
    return out + rng.normal(0.0, amplitude, size=out.shape)


def _render_set(
    role: Role,
    prefix: str,
    seed: int,
    count: int,
    size: int,
    num_classes: int,
    gap: GapParams,
) -> SampleSet:
    rng = np.random.default_rng([seed, STREAMS[role]])
    sample_set = SampleSet(role, num_classes)
    for index in range(count):
        image, label = render_scene(rng, size, num_classes, gap)
        sample_set.items.append(LabeledImage(f"{prefix}{index:05d}", image, label))
    return sample_set


def _check(size: int, num_classes: int, downsample: int) -> None:
    if num_classes < 2:
        msg = f"need at least 2 classes, got {num_classes}"
        raise ArgumentError(msg)
    if size % downsample:
        msg = f"image size {size} must be divisible by the model downsample {downsample}"
        raise ArgumentError(msg)


def generate_domains(
    seed: int,
    n_source: int,
    n_target: int,
    size: int,
    num_classes: int,
    gap: GapParams,
    downsample: int = 4,
) -> tuple[SampleSet, SampleSet]:
    _check(size, num_classes, downsample)
    log.info(
        f"rendering {n_source} source and {n_target} target scenes ({size}x{size}, {num_classes} classes, {gap})"
    )
    source = _render_set(Role.SOURCE, "src", seed, n_source, size, num_classes, GapParams())
    target = _render_set(Role.TARGET_POOL, "tgt", seed, n_target, size, num_classes, gap)
    return source, target


def generate_validation(
    seed: int,
    n: int,
    size: int,
    num_classes: int,
    gap: GapParams,
    downsample: int = 4,
) -> SampleSet:
    _check(size, num_classes, downsample)
    return _render_set(Role.VALIDATION, "val", seed, n, size, num_classes, gap)
