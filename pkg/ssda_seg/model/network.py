"""Tiny segmentation network: conv backbone, dilated multi-rate head,
1x1 classifier and a two-layer projection head for pixel embeddings."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np

from ssda_seg.diffcore import (
    ParamSet,
    Tensor,
    add,
    bilinear_upsample,
    conv2d,
    l2_normalize,
    norm2d,
    relu,
)
from ssda_seg.diffcore.ops import NormMode
from ssda_seg.errors import ConfigurationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TinySegConfig:
    num_classes: int = 5
    in_channels: int = 3
    base_width: int = 16
    embed_dim: int = 32
    rates: tuple[int, ...] = (1, 2, 4)
    downsample: int = 4

    def validate(self) -> None:
        if self.num_classes < 2:
            msg = f"num_classes must be >= 2, got {self.num_classes}"
            raise ConfigurationError(msg)
        if self.embed_dim < 2:
            msg = f"embed_dim must be >= 2, got {self.embed_dim}"
            raise ConfigurationError(msg)
        if not self.rates or any(r < 1 for r in self.rates):
            msg = f"head dilation rates must be >= 1, got {list(self.rates)}"
            raise ConfigurationError(msg)
        if self.downsample < 1:
            msg = f"downsample must be >= 1, got {self.downsample}"
            raise ConfigurationError(msg)

    @property
    def feature_width(self) -> int:
        return 2 * self.base_width

    @staticmethod
    def from_params(params: ParamSet, downsample: int = 4) -> TinySegConfig:
        """Recover the architecture from parameter names and shapes."""
        rates = sorted(
            int(m.group(1))
            for name in params.names()
            if (m := re.fullmatch(r"head\.rate(\d+)\.weight", name))
        )
        return TinySegConfig(
            num_classes=params["classifier.weight"].shape[0],
            in_channels=params["backbone.block1.conv.weight"].shape[1],
            base_width=params["backbone.block1.conv.weight"].shape[0],
            embed_dim=params["proj.conv2.weight"].shape[0],
            rates=tuple(rates),
            downsample=downsample,
        )


@dataclass
class SegOutput:
    logits: Tensor  # [B, C, H, W] at input resolution
    embeddings: Tensor  # [B, D_emb, H/ds, W/ds], unit norm per pixel
    head_logits: Tensor  # [B, C, H/ds, W/ds]


def _kaiming_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], dtype: np.dtype | type
) -> np.ndarray:
    fan_in = int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _layer_shapes(config: TinySegConfig) -> dict[str, tuple[int, ...]]:
    w, f = config.base_width, config.feature_width
    shapes: dict[str, tuple[int, ...]] = {
        "backbone.block1.conv.weight": (w, config.in_channels, 3, 3),
        "backbone.block2.conv.weight": (f, w, 3, 3),
        "backbone.block3.conv.weight": (f, f, 3, 3),
        "classifier.weight": (config.num_classes, f, 1, 1),
        "classifier.bias": (config.num_classes,),
        "proj.conv1.weight": (f, f, 1, 1),
        "proj.conv2.weight": (config.embed_dim, f, 1, 1),
        "proj.conv2.bias": (config.embed_dim,),
    }
    for rate in config.rates:
        shapes[f"head.rate{rate}.weight"] = (f, f, 3, 3)
    shapes["head.bias"] = (f,)
    return shapes


_NORMS = {
    "backbone.block1.norm": "base",
    "backbone.block2.norm": "feature",
    "backbone.block3.norm": "feature",
    "proj.norm": "feature",
}


def build(
    config: TinySegConfig, seed: int, dtype: np.dtype | type = np.float32
) -> ParamSet:
    config.validate()
    rng = np.random.default_rng(seed)
    params = ParamSet()
    for name, shape in sorted(_layer_shapes(config).items()):
        if name.endswith(".bias"):
            params.add(name, np.zeros(shape, dtype=dtype))
        else:
            params.add(name, _kaiming_uniform(rng, shape, dtype))
    for norm, width in sorted(_NORMS.items()):
        channels = config.base_width if width == "base" else config.feature_width
        params.add(f"{norm}.gamma", np.ones(channels, dtype=dtype))
        params.add(f"{norm}.beta", np.zeros(channels, dtype=dtype))
        params.add_stats(norm, channels, dtype)
    log.debug(f"built network with {params.num_elements()} parameters (seed {seed})")
    return params


def _block(
    params: ParamSet, name: str, x: Tensor, mode: NormMode, stride: int = 1
) -> Tensor:
    out = conv2d(x, params[f"{name}.conv.weight"], None, stride=stride, padding=1)
    out = norm2d(
        out,
        params[f"{name}.norm.gamma"],
        params[f"{name}.norm.beta"],
        mode,
        params.stats[f"{name}.norm"],
    )
    return relu(out)


def forward(
    params: ParamSet,
    images: Tensor | np.ndarray,
    mode: NormMode,
    config: TinySegConfig,
) -> SegOutput:
    x = images if isinstance(images, Tensor) else Tensor(images)
    _, _, height, width = x.shape
    if height % config.downsample or width % config.downsample:
        msg = f"input {height}x{width} is not divisible by the downsample factor {config.downsample}"
        raise ConfigurationError(msg)

    feat = _block(params, "backbone.block1", x, mode)
    feat = _block(params, "backbone.block2", feat, mode, stride=config.downsample)
    feat = _block(params, "backbone.block3", feat, mode)

    # parallel dilated branches summed; the shared bias rides on the first one
    head = conv2d(
        feat,
        params[f"head.rate{config.rates[0]}.weight"],
        params["head.bias"],
        padding=config.rates[0],
        dilation=config.rates[0],
    )
    for r in config.rates[1:]:
        head = add(
            head, conv2d(feat, params[f"head.rate{r}.weight"], None, padding=r, dilation=r)
        )
    head = relu(head)

    head_logits = conv2d(head, params["classifier.weight"], params["classifier.bias"])
    logits = bilinear_upsample(head_logits, height, width)

    z = conv2d(head, params["proj.conv1.weight"])
    z = relu(
        norm2d(
            z, params["proj.norm.gamma"], params["proj.norm.beta"], mode, params.stats["proj.norm"]
        )
    )
    z = conv2d(z, params["proj.conv2.weight"], params["proj.conv2.bias"])
    return SegOutput(logits=logits, embeddings=l2_normalize(z, axis=1), head_logits=head_logits)


def forward_seg(
    params: ParamSet, images: Tensor | np.ndarray, mode: NormMode, config: TinySegConfig
) -> Tensor:
    return forward(params, images, mode, config).logits


def forward_proj(
    params: ParamSet, images: Tensor | np.ndarray, mode: NormMode, config: TinySegConfig
) -> Tensor:
    return forward(params, images, mode, config).embeddings
