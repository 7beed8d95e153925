from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ssda_seg.diffcore import ParamSet, softmax_array
from ssda_seg.metrics import IoUReport, evaluate, iou, write_report
from ssda_seg.model import ModelPair, TinySegConfig, checkpoint_hash, forward, load_checkpoint

from .pseudolabels import PseudoLabelSet, generate_pseudolabels, read_pseudolabels, write_pseudolabels
from .trainer import DomainSets, MetricsWriter, TrainingContext, run_round

log = logging.getLogger(__name__)


def predict_probs(model: ParamSet, images: np.ndarray, model_config: TinySegConfig) -> np.ndarray:
    logits = forward(model, images, "eval", model_config).logits.data
    return softmax_array(logits.astype(np.float64), axis=1)


def predict(model: ParamSet, images: np.ndarray, model_config: TinySegConfig) -> np.ndarray:
    return predict_probs(model, images, model_config).argmax(axis=1)


def ensemble_predict(
    model_a: ParamSet, model_b: ParamSet, images: np.ndarray, model_config: TinySegConfig
) -> np.ndarray:
    """Argmax of the mean of both models' softmax outputs."""
    model_a.check_compatible(model_b)
    probs = predict_probs(model_a, images, model_config) + predict_probs(model_b, images, model_config)
    return (probs / 2.0).argmax(axis=1)


def evaluate_models(
    models: list[ParamSet], sets: DomainSets, model_config: TinySegConfig, path: Path
) -> IoUReport | None:
    if sets.validation is None or len(sets.validation) == 0:
        log.warning(f"no validation images, skipping {path.name}")
        return None
    if len(models) == 1:
        cm = evaluate(lambda x: predict(models[0], x, model_config), sets.validation)
    else:
        cm = evaluate(lambda x: ensemble_predict(models[0], models[1], x, model_config), sets.validation)
    report = iou(cm)
    write_report(path, report)
    return report


def pseudolabel_dir(run_dir: Path, round_index: int) -> Path:
    return run_dir / f"pl_round{round_index}"


def completed_rounds(run_dir: Path, rounds: int) -> int:
    """Number of leading rounds whose checkpoint exists."""
    done = 0
    while done <= rounds and (run_dir / f"round{done}.ckpt").exists():
        done += 1
    return done


def pseudolabels_for_round(
    round_index: int,
    model: ParamSet,
    provenance: str,
    sets: DomainSets,
    context: TrainingContext,
    run_dir: Path,
) -> PseudoLabelSet:
    """Pseudolabels produced by the previous round model; reuses a stored set when its provenance matches."""
    directory = pseudolabel_dir(run_dir, round_index)
    if (directory / "coverage.txt").exists():
        stored = read_pseudolabels(directory, context.model_config.num_classes)
        if stored.provenance == provenance:
            log.info(f"round {round_index}: reusing pseudolabels in {directory}")
            return stored
    pseudolabels = generate_pseudolabels(
        model, sets.target_unlabeled, context.plan.tau, context.model_config, provenance
    )
    write_pseudolabels(directory, pseudolabels)
    return pseudolabels


def run_algorithm(
    sets: DomainSets,
    context: TrainingContext,
    seed: int,
    run_dir: Path,
    resume: bool = True,
) -> tuple[ParamSet, ParamSet]:
    """Round 0, then K self-training rounds; returns the last two round models."""
    plan = context.plan
    plan.validate()
    run_dir.mkdir(parents=True, exist_ok=True)
    done = completed_rounds(run_dir, plan.rounds) if resume else 0
    metrics = MetricsWriter(run_dir / "metrics.csv", keep_rounds_below=done)

    models: list[ParamSet] = []
    previous: ModelPair | None = None
    previous_hash = ""
    for k in range(plan.rounds + 1):
        if k < done:
            path = run_dir / f"round{k}.ckpt"
            previous = load_checkpoint(path)
            previous_hash = checkpoint_hash(path)
            models.append(previous.teacher)
            log.info(f"round {k}: resumed from {path} (sha256 {previous_hash[:12]})")
            continue

        pseudolabels = None
        if k > 0 and previous is not None:
            pseudolabels = pseudolabels_for_round(k, previous.teacher, previous_hash, sets, context, run_dir)
            pseudolabels.require_provenance(previous_hash)
            log.info(f"round {k}: pseudolabels from round {k - 1} checkpoint {previous_hash[:12]}")

        result = run_round(k, sets, context, seed, run_dir, pseudolabels, previous, metrics)
        evaluate_models([result.model], sets, context.model_config, run_dir / f"eval_round{k}.txt")
        previous, previous_hash = result.pair, result.checkpoint_hash
        models.append(result.model)

    last = models[-1]
    before_last = models[-2] if len(models) > 1 else last
    return before_last, last
