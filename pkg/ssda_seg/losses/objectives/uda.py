import logging

import numpy as np

from ssda_seg.data import Batch
from ssda_seg.model import ModelPair

from .objective import LossBreakdown, Objective

log = logging.getLogger(__name__)


class UDAObjective(Objective):
    """Source supervision with soft consistency.

    Labeled target images only appear once pseudolabels exist; pixel
    contrast switches on with them.
    """

    cr_variant = "prob"

    def run(
        self, step: int, batch: Batch, pair: ModelPair, rng: np.random.Generator
    ) -> LossBreakdown:
        self.check_batch(batch)
        sup = self.supervised(batch, pair, rng)
        cr = self.consistency(batch, pair, rng)
        pc = self.contrast(batch, sup, cr, rng) if self.pc_active(step, batch) else None
        return self.combine(step, sup, cr, pc)
