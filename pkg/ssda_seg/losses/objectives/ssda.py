import logging

import numpy as np

from ssda_seg.data import Batch
from ssda_seg.errors import ConfigurationError
from ssda_seg.model import ModelPair

from .objective import LossBreakdown, Objective

log = logging.getLogger(__name__)


class SSDAObjective(Objective):
    """Mixed source + labeled-target supervision, one-hot consistency, target pixel contrast."""

    def run(
        self, step: int, batch: Batch, pair: ModelPair, rng: np.random.Generator
    ) -> LossBreakdown:
        self.check_batch(batch)
        if not batch.target_labeled:
            msg = f"{self}: batch has no labeled target images"
            raise ConfigurationError(msg)
        sup = self.supervised(batch, pair, rng)
        cr = self.consistency(batch, pair, rng)
        pc = self.contrast(batch, sup, cr, rng) if self.pc_active(step, batch) else None
        return self.combine(step, sup, cr, pc)
