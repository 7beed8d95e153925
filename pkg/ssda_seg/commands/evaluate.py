import logging
from pathlib import Path

from ssda_seg.data import Role, load_dataset
from ssda_seg.errors import IntegrityError
from ssda_seg.metrics import IoUReport, evaluate, iou, write_report
from ssda_seg.model import TinySegConfig, load_checkpoint
from ssda_seg.selftrain import ensemble_predict, predict

log = logging.getLogger(__name__)


def eval_command(
    checkpoint_a: Path,
    checkpoint_b: Path | None,
    data_dir: Path,
    out: Path,
    role: Role = Role.VALIDATION,
) -> IoUReport:
    """Single-model or mean-softmax ensemble evaluation of the round models."""
    dataset = load_dataset(data_dir)
    sample_set = dataset.by_role(role)
    model_a = load_checkpoint(checkpoint_a).teacher
    model_b = load_checkpoint(checkpoint_b).teacher if checkpoint_b is not None else None
    model_config = TinySegConfig.from_params(model_a)
    if model_config.num_classes != dataset.meta.classes:
        msg = f"{checkpoint_a} predicts {model_config.num_classes} classes, dataset has {dataset.meta.classes}"
        raise IntegrityError(msg)
    if model_b is None:
        cm = evaluate(lambda x: predict(model_a, x, model_config), sample_set)
    else:
        model_a.check_compatible(model_b)
        cm = evaluate(lambda x: ensemble_predict(model_a, model_b, x, model_config), sample_set)
    report = iou(cm)
    write_report(out, report)
    print(out.read_text(), end="")
    return report
