from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from ssda_seg.data import IGNORE_INDEX
from ssda_seg.errors import ConfigurationError

CRVariant = Literal["auto", "onehot", "prob"]
PCScope = Literal["target", "target+unlabeled", "target+source"]
Styling = Literal["none", "lab"]


@dataclass
class LossConfig:
    lambda_s: float = 1.0
    lambda_t: float = 1.0
    lambda_1: float = 1.0
    lambda_2: float = 0.2
    temperature: float = 0.1
    n_pix: int = 50
    pc_warmup_steps: int = 1000
    ignore_index: int = IGNORE_INDEX
    alpha_source: np.ndarray | None = None
    alpha_target: np.ndarray | None = None
    cr_variant: CRVariant = "auto"
    pc_scope: PCScope = "target"
    styling: Styling = "none"
    batch_mix: bool = True
    enable_cr: bool = True
    enable_pc: bool = True

    def validate(self) -> None:
        for name in ("lambda_s", "lambda_t", "lambda_1", "lambda_2"):
            if getattr(self, name) < 0:
                msg = f"{name}={getattr(self, name)} must be non-negative"
                raise ConfigurationError(msg)
        if self.temperature <= 0:
            msg = f"temperature={self.temperature} must be positive"
            raise ConfigurationError(msg)
        if self.n_pix < 2:
            msg = f"n_pix={self.n_pix} must be at least 2"
            raise ConfigurationError(msg)

    def alpha(self, domain: Literal["source", "target"], num_classes: int) -> np.ndarray:
        weights = self.alpha_source if domain == "source" else self.alpha_target
        if weights is None:
            return np.ones(num_classes)
        if len(weights) != num_classes:
            msg = f"alpha_{domain} has {len(weights)} entries for {num_classes} classes"
            raise ConfigurationError(msg)
        return np.asarray(weights, dtype=np.float64)

    def lambda_cr(self) -> float:
        return self.lambda_1 if self.enable_cr else 0.0

    def lambda_pc(self, step: int) -> float:
        if not self.enable_pc or step < self.pc_warmup_steps:
            return 0.0
        return self.lambda_2
