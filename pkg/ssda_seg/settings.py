from __future__ import annotations

import logging
import os
import types
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from .augment import AugConfig
from .data import BatchCounts, DatasetMeta, GapParams, Setting
from .errors import ConfigurationError, SsdaError
from .losses import LossConfig
from .model import TinySegConfig
from .selftrain import SelfTrainPlan, TrainingContext

log = logging.getLogger(__name__)

SEED_ENV = "SSDA_SEED"
CR_VARIANTS = ("auto", "onehot", "prob")
PC_SCOPES = ("target", "target+unlabeled", "target+source")
STYLINGS = ("none", "lab")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    name: str = "run"
    setting: str = "ssda"
    n_target: int = 8  # labeled target images
    seed: int | None = None
    runs_dir: Path = Path("runs")
    data_dir: Path | None = None

    # generator, used when data_dir is unset
    classes: int = 5
    size: int = 32
    n_source: int = 400
    pool_target: int = 400
    n_validation: int = 100
    gap: str = "large"
    gap_color_shift: float | None = None
    gap_gamma: float | None = None
    gap_noise: float | None = None
    gap_freq_skew: float | None = None

    # model
    base_width: int = 16
    embed_dim: int = 32

    # losses
    lambda_s: float = 1.0
    lambda_t: float = 1.0
    lambda_1: float = 1.0
    lambda_2: float = 0.2
    temperature: float = 0.1
    n_pix: int = 50
    pc_warmup_steps: int = 1000

    # augmentation
    p_jitter: float = 0.8
    p_blur: float = 0.5
    p_randaug: float = 1.0
    p_cutmix: float = 1.0
    cutmix_area_min: float = 0.2
    cutmix_area_max: float = 0.5

    # optimization and self-training
    rounds: int = 2
    n_steps: int = 2000
    n_drop: int = 1000
    tau: float = 0.9
    lr: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 5e-4
    clip_norm: float = 10.0
    batch_source: int = 2
    batch_target: int = 2
    batch_unlabeled: int = 2

    # ablations
    disable_cr: bool = False
    disable_pc: bool = False
    disable_class_weights: bool = False
    disable_batch_mix: bool = False
    cr_variant: str = "auto"
    styling: str = "none"
    pc_scope: str = "target"
    no_pl_drop: bool = False
    warm_start: bool = False

    log_every: int = 50

    @staticmethod
    def keys() -> list[str]:
        return sorted(f.name for f in fields(RunConfig))

    @staticmethod
    def coerce(key: str, raw: str) -> Any:
        hints = typing.get_type_hints(RunConfig)
        if key not in hints:
            msg = f"unknown configuration key {key!r}"
            raise ConfigurationError(msg)
        kind = hints[key]
        args = typing.get_args(kind)
        optional = isinstance(kind, types.UnionType) and type(None) in args
        if optional:
            if raw.strip() in ("", "none", "None"):
                return None
            kind = next(a for a in args if a is not type(None))
        value = raw.strip()
        try:
            if kind is bool:
                if value.lower() in _TRUE:
                    return True
                if value.lower() in _FALSE:
                    return False
                raise ValueError(value)  # noqa: TRY301
            if kind is int:
                return int(value)
            if kind is float:
                return float(value)
            if kind is Path:
                return Path(value)
        except ValueError as e:
            msg = f"{key}: cannot read {raw!r} as {kind.__name__}"
            raise ConfigurationError(msg) from e
        return value

    @staticmethod
    def parse_text(text: str) -> dict[str, Any]:
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            key, sep, raw = stripped.partition("=")
            if not sep:
                msg = f"config line {lineno}: expected key = value, got {line!r}"
                raise ConfigurationError(msg)
            key = key.strip()
            values[key] = RunConfig.coerce(key, raw)
        return values

    @staticmethod
    def from_file(path: Path) -> RunConfig:
        if not path.exists():
            msg = f"config file {path} does not exist"
            raise ConfigurationError(msg)
        return RunConfig(**RunConfig.parse_text(path.read_text(encoding="utf-8")))

    def merged(self, overrides: dict[str, Any]) -> RunConfig:
        for key in overrides:
            if key not in self.keys():
                msg = f"unknown configuration key {key!r}"
                raise ConfigurationError(msg)
        return replace(self, **overrides)

    def with_seed(self) -> RunConfig:
        """Fill the seed from SSDA_SEED when neither file nor flags set it."""
        if self.seed is not None:
            return self
        raw = os.environ.get(SEED_ENV)
        if raw is None:
            return replace(self, seed=0)
        try:
            return replace(self, seed=int(raw))
        except ValueError as e:
            msg = f"{SEED_ENV}={raw!r} is not an integer"
            raise ConfigurationError(msg) from e

    def to_text(self) -> str:
        lines = []
        for key in self.keys():
            value = getattr(self, key)
            lines.append(f"{key} = {'' if value is None else value}")
        return "\n".join(lines) + "\n"

    def dump(self, path: Path) -> None:
        path.write_text(self.to_text(), encoding="utf-8")

    @property
    def setting_enum(self) -> Setting:
        try:
            return Setting(self.setting)
        except ValueError:
            msg = f"setting={self.setting!r}, expected one of {', '.join(s.value for s in Setting)}"
            raise ConfigurationError(msg) from None

    def _conflict(self, *keys: str, reason: str) -> ConfigurationError:
        pairs = " and ".join(f"{k}={getattr(self, k)}" for k in keys)
        return ConfigurationError(f"conflicting keys {pairs}: {reason}")

    def validate(self) -> None:
        setting = self.setting_enum
        for key, allowed in (
            ("cr_variant", CR_VARIANTS),
            ("pc_scope", PC_SCOPES),
            ("styling", STYLINGS),
        ):
            if getattr(self, key) not in allowed:
                msg = f"{key}={getattr(self, key)!r}, expected one of {', '.join(allowed)}"
                raise ConfigurationError(msg)
        if setting is Setting.SSL and self.pc_scope == "target+source":
            raise self._conflict("setting", "pc_scope", reason="SSL runs have no source data")
        if setting is Setting.SSL and self.styling == "lab":
            raise self._conflict("setting", "styling", reason="SSL runs have no source images to style")
        if setting is Setting.UDA and self.n_target > 0:
            raise self._conflict("setting", "n_target", reason="UDA uses no labeled target images")
        if setting is not Setting.UDA and self.n_target <= 0:
            raise self._conflict("setting", "n_target", reason="needs at least one labeled target image")
        if self.data_dir is None and self.n_target > self.pool_target:
            raise self._conflict("n_target", "pool_target", reason="more labels than target images")
        if self.n_drop >= self.n_steps:
            raise self._conflict("n_drop", "n_steps", reason="pseudolabels must be dropped before the round ends")
        if self.cutmix_area_min > self.cutmix_area_max:
            raise self._conflict("cutmix_area_min", "cutmix_area_max", reason="empty range")
        downsample = self.model_config().downsample
        if self.size % downsample:
            msg = f"size={self.size} must be a multiple of the output stride {downsample}"
            raise ConfigurationError(msg)
        try:
            self.gap_params()
            self.plan().validate()
            self.loss_config().validate()
            self.aug_config().validate()
            self.model_config().validate()
        except SsdaError as e:
            raise ConfigurationError(e.message) from e

    def gap_params(self) -> GapParams:
        base = GapParams.preset(self.gap)
        overrides = {
            name: value
            for name in ("color_shift", "gamma", "noise", "freq_skew")
            if (value := getattr(self, f"gap_{name}")) is not None
        }
        return replace(base, **overrides)

    def dataset_meta(self) -> DatasetMeta:
        return DatasetMeta(
            classes=self.classes,
            size=self.size,
            seed=self.seed or 0,
            n_source=self.n_source,
            n_target=self.pool_target,
            n_validation=self.n_validation,
            gap=self.gap_params(),
        )

    def model_config(self) -> TinySegConfig:
        return TinySegConfig(
            num_classes=self.classes, base_width=self.base_width, embed_dim=self.embed_dim
        )

    def loss_config(self) -> LossConfig:
        return LossConfig(
            lambda_s=self.lambda_s,
            lambda_t=self.lambda_t,
            lambda_1=self.lambda_1,
            lambda_2=self.lambda_2,
            temperature=self.temperature,
            n_pix=self.n_pix,
            pc_warmup_steps=self.pc_warmup_steps,
            cr_variant=self.cr_variant,  # type: ignore[arg-type]
            pc_scope=self.pc_scope,  # type: ignore[arg-type]
            styling=self.styling,  # type: ignore[arg-type]
            batch_mix=not self.disable_batch_mix,
            enable_cr=not self.disable_cr,
            enable_pc=not self.disable_pc,
        )

    def aug_config(self) -> AugConfig:
        return AugConfig(
            p_jitter=self.p_jitter,
            p_blur=self.p_blur,
            p_randaug=self.p_randaug,
            p_cutmix=self.p_cutmix,
            cutmix_area=(self.cutmix_area_min, self.cutmix_area_max),
        )

    def plan(self) -> SelfTrainPlan:
        return SelfTrainPlan(
            rounds=self.rounds,
            n_steps=self.n_steps,
            n_drop=self.n_drop,
            tau=self.tau,
            lr=self.lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            clip_norm=self.clip_norm,
            no_pl_drop=self.no_pl_drop,
            warm_start=self.warm_start,
        )

    def batch_counts(self) -> BatchCounts:
        return BatchCounts(self.batch_source, self.batch_target, self.batch_unlabeled)

    def context(self) -> TrainingContext:
        return TrainingContext(
            setting=self.setting_enum,
            model_config=self.model_config(),
            loss_config=self.loss_config(),
            aug_config=self.aug_config(),
            plan=self.plan(),
            batch_counts=self.batch_counts(),
            class_weighting=not self.disable_class_weights,
            log_every=self.log_every,
        )

    @property
    def run_dir(self) -> Path:
        return self.runs_dir / self.name
