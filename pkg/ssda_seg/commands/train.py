import logging
from pathlib import Path

from ssda_seg.custom_logger import add_file_handler, remove_handler
from ssda_seg.data import Dataset, Setting, generate_dataset, load_dataset, split_target
from ssda_seg.errors import StateError
from ssda_seg.metrics import IoUReport, parse_report
from ssda_seg.selftrain import DomainSets, evaluate_models, run_algorithm
from ssda_seg.settings import RunConfig

log = logging.getLogger(__name__)

# keys that may change between a run and its resumption
RESUME_FREE_KEYS = ("log_every", "name", "runs_dir")


def load_or_generate(config: RunConfig) -> Dataset:
    if config.data_dir is not None:
        return load_dataset(config.data_dir)
    return generate_dataset(config.dataset_meta())


def domain_sets(config: RunConfig, dataset: Dataset) -> DomainSets:
    seed = config.seed or 0
    labeled, unlabeled = split_target(dataset.target, config.n_target, seed)
    source = None if config.setting_enum is Setting.SSL else dataset.source
    return DomainSets(source, labeled, unlabeled, dataset.validation)


def check_resumable(config: RunConfig, run_dir: Path) -> None:
    """Refuse to reuse checkpoints that were trained under another config."""
    stored_path = run_dir / "config.txt"
    if not stored_path.exists() or not any(run_dir.glob("round*.ckpt")):
        return
    stored = RunConfig.from_file(stored_path)
    changed = [
        f"{key}: {getattr(stored, key)} -> {getattr(config, key)}"
        for key in RunConfig.keys()
        if key not in RESUME_FREE_KEYS and getattr(stored, key) != getattr(config, key)
    ]
    if changed:
        msg = (
            f"{run_dir} holds checkpoints of a different config ({', '.join(changed)}); "
            "use another --name or remove the directory"
        )
        raise StateError(msg)


def round_reports(run_dir: Path) -> tuple[list[float], float | None]:
    """Validation mIoU of each round model, and of the final ensemble if present."""
    rounds = []
    k = 0
    while (path := run_dir / f"eval_round{k}.txt").exists():
        rounds.append(parse_report(path.read_text())["miou"])
        k += 1
    ensemble = run_dir / "eval.txt"
    return rounds, parse_report(ensemble.read_text())["miou"] if ensemble.exists() else None


def train_run(config: RunConfig) -> IoUReport | None:
    """Full self-training run in ``config.run_dir``; returns the ensemble report."""
    config = config.with_seed()
    config.validate()
    dataset = load_or_generate(config)
    if config.data_dir is not None:
        config = config.merged({"classes": dataset.meta.classes, "size": dataset.meta.size})
        config.validate()

    run_dir = config.run_dir
    check_resumable(config, run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    config.dump(run_dir / "config.txt")
    handler = add_file_handler(run_dir / "train.log")
    try:
        log.info(f"training {config.name}: setting={config.setting} n_target={config.n_target} seed={config.seed}")
        sets = domain_sets(config, dataset)
        context = config.context()
        model_a, model_b = run_algorithm(sets, context, config.seed or 0, run_dir)
        return evaluate_models([model_a, model_b], sets, context.model_config, run_dir / "eval.txt")
    finally:
        remove_handler(handler)


def train_command(config: RunConfig) -> Path:
    report = train_run(config)
    if report is not None:
        print(f"miou={report.miou:.6f}")
    return config.run_dir
