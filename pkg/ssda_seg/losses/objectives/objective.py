import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ssda_seg.augment import AugConfig, style_batch
from ssda_seg.data import Batch
from ssda_seg.diffcore import Tensor, add, slice_batch, softmax_array
from ssda_seg.errors import ConfigurationError
from ssda_seg.model import ModelPair, TinySegConfig

from ..ce import SupervisedTerms, supervised_terms
from ..config import LossConfig
from ..consistency import ConsistencyResult, consistency_loss
from ..contrast import (
    ContrastSample,
    downsample_labels,
    merge_samples,
    pixel_contrast_loss,
    sample_contrast,
)

log = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    total: Tensor
    sup_source: float = 0.0
    sup_target: float = 0.0
    cr: float = 0.0
    pc: float = 0.0

    def terms(self) -> dict[str, float]:
        return {
            "total": self.total.item(),
            "sup_source": self.sup_source,
            "sup_target": self.sup_target,
            "cr": self.cr,
            "pc": self.pc,
        }


class Objective(ABC):
    cr_variant = "onehot"
    uses_source = True

    def __init__(
        self,
        loss_config: LossConfig,
        aug_config: AugConfig,
        model_config: TinySegConfig,
    ) -> None:
        self.loss_config = loss_config
        self.aug_config = aug_config
        self.model_config = model_config

    def check_batch(self, batch: Batch) -> None:
        if self.uses_source and not batch.source:
            msg = f"{self}: batch has no source images"
            raise ConfigurationError(msg)
        if not self.uses_source and batch.source:
            msg = f"{self}: source images are not allowed in this setting"
            raise ConfigurationError(msg)

    def supervised(
        self, batch: Batch, pair: ModelPair, rng: np.random.Generator
    ) -> SupervisedTerms:
        source_images = Batch.images(batch.source) if batch.source else None
        if source_images is not None and self.loss_config.styling == "lab":
            references = [item.image for item in batch.target_labeled + batch.target_unlabeled]
            styled = style_batch([item.image for item in batch.source], references, rng)
            source_images = np.stack([s.transpose(2, 0, 1) for s in styled]).astype(np.float32)
        return supervised_terms(
            pair.student,
            source_images,
            Batch.labels(batch.source) if batch.source else None,
            Batch.images(batch.target_labeled) if batch.target_labeled else None,
            Batch.labels(batch.target_labeled) if batch.target_labeled else None,
            self.loss_config,
            self.model_config,
        )

    def resolved_cr_variant(self) -> str:
        if self.loss_config.cr_variant == "auto":
            return self.cr_variant
        return self.loss_config.cr_variant

    def consistency(
        self, batch: Batch, pair: ModelPair, rng: np.random.Generator
    ) -> ConsistencyResult | None:
        if self.loss_config.lambda_cr() == 0.0 or not batch.target_unlabeled:
            return None
        variant = self.resolved_cr_variant()
        return consistency_loss(
            pair.student,
            pair.teacher,
            Batch.images(batch.target_unlabeled),
            "prob" if variant == "prob" else "onehot",
            rng,
            self.model_config,
            self.aug_config,
        )

    def _sample(
        self,
        embeddings: Tensor,
        head_logits: Tensor,
        labels: np.ndarray,
        rng: np.random.Generator,
    ) -> ContrastSample:
        factor = self.model_config.downsample
        probs = softmax_array(head_logits.data.astype(np.float64), axis=1)
        return sample_contrast(
            embeddings,
            downsample_labels(labels, factor),
            probs,
            self.loss_config.n_pix,
            rng,
            self.loss_config.ignore_index,
        )

    def contrast(
        self,
        batch: Batch,
        sup: SupervisedTerms,
        cr: ConsistencyResult | None,
        rng: np.random.Generator,
    ) -> Tensor | None:
        """Pixel contrast over the labeled-target embeddings, widened by ``pc_scope``."""
        if sup.output is None or sup.target is None or not batch.target_labeled:
            return None
        out = sup.output
        n_source = sup.n_source
        total = out.logits.shape[0]
        samples = [
            self._sample(
                slice_batch(out.embeddings, n_source, total),
                slice_batch(out.head_logits, n_source, total),
                Batch.labels(batch.target_labeled),
                rng,
            )
        ]
        scope = self.loss_config.pc_scope
        if scope == "target+source" and n_source:
            samples.append(
                self._sample(
                    slice_batch(out.embeddings, 0, n_source),
                    slice_batch(out.head_logits, 0, n_source),
                    Batch.labels(batch.source),
                    rng,
                )
            )
        if scope == "target+unlabeled" and cr is not None:
            pseudo = cr.targets.argmax(axis=1)
            samples.append(
                self._sample(cr.student.embeddings, cr.student.head_logits, pseudo, rng)
            )
        sample = samples[0] if len(samples) == 1 else merge_samples(samples)
        return pixel_contrast_loss(sample, self.loss_config.temperature)

    def combine(
        self,
        step: int,
        sup: SupervisedTerms,
        cr: ConsistencyResult | None,
        pc: Tensor | None,
    ) -> LossBreakdown:
        weighted: list[Tensor] = []
        breakdown = {"sup_source": 0.0, "sup_target": 0.0, "cr": 0.0, "pc": 0.0}
        if sup.source is not None:
            weighted.append(sup.source)
            breakdown["sup_source"] = sup.source.item()
        if sup.target is not None:
            weighted.append(sup.target)
            breakdown["sup_target"] = sup.target.item()
        if cr is not None:
            term = cr.loss * self.loss_config.lambda_cr()
            weighted.append(term)
            breakdown["cr"] = term.item()
        lambda_pc = self.loss_config.lambda_pc(step)
        if pc is not None and lambda_pc > 0.0:
            term = pc * lambda_pc
            weighted.append(term)
            breakdown["pc"] = term.item()
        if not weighted:
            msg = f"{self}: batch produced no loss terms"
            raise ConfigurationError(msg)
        total = weighted[0]
        for term in weighted[1:]:
            total = add(total, term)
        return LossBreakdown(total, **breakdown)

    def pc_active(self, step: int, batch: Batch) -> bool:
        return self.loss_config.lambda_pc(step) > 0.0 and bool(batch.target_labeled)

    @abstractmethod
    def run(
        self, step: int, batch: Batch, pair: ModelPair, rng: np.random.Generator
    ) -> LossBreakdown:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.__class__.__name__
