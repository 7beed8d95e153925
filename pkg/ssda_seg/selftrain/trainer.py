from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ssda_seg.augment import AugConfig
from ssda_seg.data import (
    BatchCounts,
    BatchSampler,
    SampleSet,
    Setting,
    TrainingSets,
    class_frequencies,
    with_pseudolabels,
)
from ssda_seg.diffcore import ParamSet, backward, clip_grad_total_norm, sgd_nesterov_step
from ssda_seg.errors import EmptySetError, NumericError, StateError
from ssda_seg.losses import LossConfig, class_weights, objective_for
from ssda_seg.model import ModelPair, TinySegConfig, build, ema_update, save_checkpoint

from .plan import SelfTrainPlan
from .pseudolabels import PseudoLabelSet

log = logging.getLogger(__name__)

METRICS_SCHEMA = 1
METRICS_COLUMNS = (
    "round",
    "step",
    "lr",
    "total",
    "sup_source",
    "sup_target",
    "cr",
    "pc",
    "grad_norm",
    "mu",
)


@dataclass
class DomainSets:
    source: SampleSet | None
    target_labeled: SampleSet
    target_unlabeled: SampleSet
    validation: SampleSet | None = None


@dataclass
class TrainingContext:
    setting: Setting
    model_config: TinySegConfig
    loss_config: LossConfig
    aug_config: AugConfig = field(default_factory=AugConfig)
    plan: SelfTrainPlan = field(default_factory=SelfTrainPlan)
    batch_counts: BatchCounts = field(default_factory=BatchCounts)
    class_weighting: bool = True
    log_every: int = 50


class MetricsWriter:
    """Appends one row per optimizer step to ``metrics.csv``."""

    def __init__(self, path: Path, keep_rounds_below: int = 0) -> None:
        self.path = path
        kept: list[list[str]] = []
        if keep_rounds_below > 0 and path.exists():
            with path.open(newline="") as f:
                rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
            kept = [r for r in rows[1:] if int(r[0]) < keep_rounds_below]
        with path.open("w", newline="") as f:
            f.write(f"# metrics schema {METRICS_SCHEMA}\n")
            writer = csv.writer(f)
            writer.writerow(METRICS_COLUMNS)
            writer.writerows(kept)

    def append(self, row: dict[str, float]) -> None:
        with self.path.open("a", newline="") as f:
            csv.writer(f).writerow(
                [_format_cell(row[column]) for column in METRICS_COLUMNS]
            )


def _format_cell(value: float) -> str:
    if isinstance(value, int):
        return str(value)
    return f"{value:.8g}"


def round_seed(seed: int, round_index: int) -> int:
    return seed * 1000 + round_index


def round_loss_config(
    context: TrainingContext, sets: DomainSets, target_stream: SampleSet
) -> LossConfig:
    """Class weights from the source set and from the labeled-target stream of this round."""
    if not context.class_weighting:
        return replace(context.loss_config, alpha_source=None, alpha_target=None)
    alpha_source = None
    if sets.source is not None and context.setting is not Setting.SSL:
        alpha_source = class_weights(class_frequencies(sets.source))
    alpha_target = None
    for candidate in (sets.target_labeled, target_stream):
        try:
            alpha_target = class_weights(class_frequencies(candidate))
            break
        except EmptySetError:
            continue
    return replace(context.loss_config, alpha_source=alpha_source, alpha_target=alpha_target)


@dataclass
class RoundResult:
    round_index: int
    pair: ModelPair
    checkpoint: Path
    checkpoint_hash: str

    @property
    def model(self) -> ParamSet:
        """The round model: the EMA teacher at round end."""
        return self.pair.teacher


def initial_pair(
    context: TrainingContext, seed: int, round_index: int, previous: ModelPair | None
) -> ModelPair:
    if context.plan.warm_start and previous is not None:
        student = previous.teacher.clone(requires_grad=True)
        log.info(f"round {round_index}: warm start from the previous round's teacher")
    else:
        student = build(context.model_config, round_seed(seed, round_index))
    return ModelPair.from_student(student)


def run_round(
    round_index: int,
    sets: DomainSets,
    context: TrainingContext,
    seed: int,
    run_dir: Path,
    pseudolabels: PseudoLabelSet | None = None,
    previous: ModelPair | None = None,
    metrics: MetricsWriter | None = None,
) -> RoundResult:
    """Train one round from scratch, dropping pseudolabels at n_drop."""
    plan = context.plan
    if round_index > 0 and pseudolabels is None:
        msg = f"round {round_index} needs pseudolabels from round {round_index - 1}"
        raise StateError(msg)
    rseed = round_seed(seed, round_index)
    pair = initial_pair(context, seed, round_index, previous)

    if pseudolabels is not None:
        target_stream = with_pseudolabels(sets.target_labeled, sets.target_unlabeled, pseudolabels.maps)
    else:
        target_stream = sets.target_labeled
    loss_config = round_loss_config(context, sets, target_stream)
    objective = objective_for(context.setting, loss_config, context.aug_config, context.model_config)
    sampler = BatchSampler(
        TrainingSets(sets.source, target_stream, sets.target_unlabeled),
        context.setting,
        rseed,
        context.batch_counts,
    )
    rng = np.random.default_rng([rseed, 7])
    log.info(
        f"round {round_index}: {plan.n_steps} steps, {objective}, labeled target stream {len(target_stream)} images"
    )

    dropped = False
    for step in range(plan.n_steps):
        if not dropped and pseudolabels is not None and not plan.uses_pseudolabels(step):
            sampler.set_target_labeled(sets.target_labeled)
            dropped = True
            log.info(f"round {round_index} step {step}: dropped pseudolabels")
        lr = plan.lr_at(step)
        batch = sampler.next_batch()
        pair.student.zero_grad()
        breakdown = objective.run(step, batch, pair, rng)
        if not np.isfinite(breakdown.total.data).all():
            msg = f"round {round_index} step {step}: loss is not finite ({breakdown.terms()})"
            raise NumericError(msg)
        backward(breakdown.total)
        grad_norm = clip_grad_total_norm(pair.student, plan.clip_norm)
        sgd_nesterov_step(pair.student, lr, plan.momentum, plan.weight_decay)
        mu = ema_update(pair)

        row = {"round": round_index, "step": step, "lr": lr, **breakdown.terms(), "grad_norm": grad_norm, "mu": mu}
        if metrics is not None:
            metrics.append(row)
        if step % context.log_every == 0 or step == plan.n_steps - 1:
            log.info(
                f"round {round_index} step {step}/{plan.n_steps}: lr={lr:.1e} total={row['total']:.4f} "
                f"sup_s={row['sup_source']:.4f} sup_t={row['sup_target']:.4f} cr={row['cr']:.4f} "
                f"pc={row['pc']:.4f} mu={mu:.4f}"
            )

    path = run_dir / f"round{round_index}.ckpt"
    digest = save_checkpoint(path, pair)
    return RoundResult(round_index, pair, path, digest)
