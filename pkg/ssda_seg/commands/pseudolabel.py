import logging
from pathlib import Path

from ssda_seg.model import TinySegConfig, checkpoint_hash, load_checkpoint
from ssda_seg.selftrain import PseudoLabelSet, generate_pseudolabels, write_pseudolabels
from ssda_seg.settings import RunConfig

from .train import domain_sets, load_or_generate

log = logging.getLogger(__name__)


def pseudolabel_command(config: RunConfig, checkpoint: Path, out: Path) -> PseudoLabelSet:
    """Label the unlabeled target images of the configured split with the round model stored in ``checkpoint``."""
    config = config.with_seed()
    model = load_checkpoint(checkpoint).teacher
    sets = domain_sets(config, load_or_generate(config))
    pseudolabels = generate_pseudolabels(
        model,
        sets.target_unlabeled,
        config.tau,
        TinySegConfig.from_params(model),
        provenance=checkpoint_hash(checkpoint),
    )
    write_pseudolabels(out, pseudolabels)
    print(f"coverage={pseudolabels.total_coverage:.6f}")
    return pseudolabels
