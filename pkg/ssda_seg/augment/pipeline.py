"""Strong augmentation: color jitter, Gaussian blur, one RandAugment color
op, then CutMix with a partner image.

Only color operations run before CutMix, so teacher predictions on the
clean image stay pixel-aligned with the augmented student view outside the
pasted box. Images are H x W x 3 float arrays in [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from PIL import Image, ImageEnhance, ImageOps
from scipy.ndimage import gaussian_filter
from skimage.color import hsv2rgb, rgb2hsv

from ssda_seg.errors import ArgumentError, ConfigurationError

log = logging.getLogger(__name__)

RANDAUGMENT_OPS = (
    "brightness",
    "color",
    "contrast",
    "equalize",
    "posterize",
    "sharpness",
    "solarize",
)
_ENHANCERS = {
    "brightness": ImageEnhance.Brightness,
    "color": ImageEnhance.Color,
    "contrast": ImageEnhance.Contrast,
    "sharpness": ImageEnhance.Sharpness,
}
GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugConfig:
    p_jitter: float = 0.8
    p_blur: float = 0.5
    p_randaug: float = 1.0
    p_cutmix: float = 1.0
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    blur_sigma: tuple[float, float] = (0.1, 1.0)
    cutmix_area: tuple[float, float] = (0.2, 0.5)
    cutmix_aspect: tuple[float, float] = (0.5, 2.0)
    enhance_factor: tuple[float, float] = (0.6, 1.4)
    posterize_bits: tuple[int, int] = (4, 8)
    solarize_threshold: tuple[float, float] = (0.5, 1.0)

    def validate(self) -> None:
        for name in ("p_jitter", "p_blur", "p_randaug", "p_cutmix"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                msg = f"{name}={value} is not a probability"
                raise ConfigurationError(msg)
        low, high = self.cutmix_area
        if not 0.0 < low <= high < 1.0:
            msg = f"cutmix_area=({low}, {high}) must lie inside (0, 1)"
            raise ConfigurationError(msg)
        if not 1 <= self.posterize_bits[0] <= self.posterize_bits[1] <= 8:
            msg = f"posterize_bits={self.posterize_bits} must lie in 1..8"
            raise ConfigurationError(msg)


def _to_pil(x: np.ndarray) -> Image.Image:
    return Image.fromarray(np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8))


def _from_pil(img: Image.Image, dtype: Any) -> np.ndarray:
    return (np.asarray(img, dtype=np.float64) / 255.0).astype(dtype)


def randaugment_op(name: str, magnitude: float, x: np.ndarray) -> np.ndarray:
    """Apply one op with PIL semantics.

    ``magnitude`` is the enhance factor for brightness, color, contrast and
    sharpness (1 is the identity), the bit depth for posterize, the
    threshold in [0, 1] for solarize (pixels at or above it are inverted)
    and is ignored by equalize.
    """
    if name not in RANDAUGMENT_OPS:
        msg = f"unknown RandAugment op {name!r}, expected one of {', '.join(RANDAUGMENT_OPS)}"
        raise ArgumentError(msg)
    if name in _ENHANCERS:
        if magnitude == 1.0:
            return x.copy()
        out = _ENHANCERS[name](_to_pil(x)).enhance(magnitude)
    elif name == "equalize":
        out = ImageOps.equalize(_to_pil(x))
    elif name == "posterize":
        out = ImageOps.posterize(_to_pil(x), int(magnitude))
    else:
        out = ImageOps.solarize(_to_pil(x), threshold=int(round(magnitude * 255)))
    return _from_pil(out, x.dtype)


def color_jitter(x: np.ndarray, config: AugConfig, rng: np.random.Generator) -> np.ndarray:
    b, c, s = (
        rng.uniform(1.0 - strength, 1.0 + strength)
        for strength in (config.brightness, config.contrast, config.saturation)
    )
    h = rng.uniform(-config.hue, config.hue)
    out = np.clip(x * b, 0.0, 1.0)
    mean_gray = float((out @ GRAY_WEIGHTS).mean())
    out = np.clip((out - mean_gray) * c + mean_gray, 0.0, 1.0)
    gray = (out @ GRAY_WEIGHTS)[..., None]
    out = np.clip(gray + (out - gray) * s, 0.0, 1.0)
    hsv = rgb2hsv(out)
    hsv[..., 0] = (hsv[..., 0] + h) % 1.0
    return np.clip(hsv2rgb(hsv), 0.0, 1.0).astype(x.dtype)


def gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    return np.clip(gaussian_filter(x, sigma=(sigma, sigma, 0.0), mode="reflect"), 0.0, 1.0)


def color_augment(x: np.ndarray, config: AugConfig, rng: np.random.Generator) -> np.ndarray:
    """Jitter (p_jitter), blur (p_blur), one RandAugment op (p_randaug)."""
    out = x.copy()
    if rng.uniform() < config.p_jitter:
        out = color_jitter(out, config, rng)
    if rng.uniform() < config.p_blur:
        out = gaussian_blur(out, rng.uniform(*config.blur_sigma))
    if rng.uniform() < config.p_randaug:
        name = RANDAUGMENT_OPS[int(rng.integers(len(RANDAUGMENT_OPS)))]
        if name == "posterize":
            low, high = config.posterize_bits
            magnitude = float(rng.integers(low, high + 1))
        elif name == "solarize":
            magnitude = rng.uniform(*config.solarize_threshold)
        else:
            magnitude = rng.uniform(*config.enhance_factor)
        out = randaugment_op(name, magnitude, out)
    return np.clip(out, 0.0, 1.0).astype(x.dtype)


def cutmix_box(
    height: int,
    width: int,
    area_frac: float,
    aspect: float,
    center: tuple[int, int] | None,
    rng: np.random.Generator | None,
) -> tuple[int, int, int, int]:
    """(top, bottom, left, right) of a box with area ~ area_frac * H * W and w/h ~ aspect."""
    area = area_frac * height * width
    if area <= 0.0:
        return 0, 0, 0, 0
    box_h = min(height, max(1, round(np.sqrt(area / aspect))))
    box_w = min(width, max(1, round(area / box_h)))
    if center is None:
        if rng is None:
            msg = "a random CutMix box needs an rng"
            raise ArgumentError(msg)
        top = int(rng.integers(0, height - box_h + 1))
        left = int(rng.integers(0, width - box_w + 1))
    else:
        top = center[0] - box_h // 2
        left = center[1] - box_w // 2
    bottom, right = min(height, top + box_h), min(width, left + box_w)
    return max(0, top), bottom, max(0, left), right


def cutmix(
    x1: np.ndarray,
    x2: np.ndarray,
    area_frac: float,
    aspect: float = 1.0,
    center: tuple[int, int] | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Hard-paste a box of x2 into x1; returns the mix and the pasted-pixel mask."""
    if x1.shape != x2.shape:
        msg = f"cutmix needs equal shapes, got {x1.shape} and {x2.shape}"
        raise ArgumentError(msg)
    height, width = x1.shape[:2]
    top, bottom, left, right = cutmix_box(height, width, area_frac, aspect, center, rng)
    mask = np.zeros((height, width), dtype=bool)
    mask[top:bottom, left:right] = True
    mixed = x1.copy()
    mixed[mask] = x2[mask]
    return mixed, mask


def strong_augment(
    x: np.ndarray,
    partner: np.ndarray,
    rng: np.random.Generator,
    config: AugConfig | None = None,
    partner_id: str | int | None = None,
) -> tuple[np.ndarray, np.ndarray, str | int | None]:
    """Color-augment both images, then CutMix the partner into ``x``.

    The inputs are never modified. The returned mask marks pixels whose
    pseudo-target must come from the partner.
    """
    config = config or AugConfig()
    if x.shape != partner.shape:
        msg = f"strong_augment needs equal shapes, got {x.shape} and {partner.shape}"
        raise ArgumentError(msg)
    view = color_augment(x, config, rng)
    if rng.uniform() >= config.p_cutmix:
        return view, np.zeros(x.shape[:2], dtype=bool), partner_id
    partner_view = color_augment(partner, config, rng)
    area = rng.uniform(*config.cutmix_area)
    aspect = float(np.exp(rng.uniform(*np.log(config.cutmix_aspect))))
    mixed, mask = cutmix(view, partner_view, area, aspect, None, rng)
    return np.clip(mixed, 0.0, 1.0), mask, partner_id


@dataclass
class StrongBatch:
    views: np.ndarray  # B x 3 x H x W
    masks: np.ndarray  # B x H x W bool
    partners: list[int]


def strong_augment_batch(
    images: list[np.ndarray], rng: np.random.Generator, config: AugConfig | None = None
) -> StrongBatch:
    """Augment an unlabeled batch; item i mixes with item (i + 1) mod B."""
    views, masks, partners = [], [], []
    for index, image in enumerate(images):
        partner = (index + 1) % len(images)
        view, mask, _ = strong_augment(image, images[partner], rng, config, partner)
        views.append(view.transpose(2, 0, 1))
        masks.append(mask)
        partners.append(partner)
    return StrongBatch(
        np.stack(views).astype(np.float32), np.stack(masks), partners
    )
