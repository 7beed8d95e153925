import csv
from pathlib import Path

import numpy as np
import pytest
from conftest import NUM_CLASSES, SIZE
from pytest_mock import MockerFixture

from ssda_seg.data import BatchCounts, BatchSampler, Role, SampleSet, Setting, split_target
from ssda_seg.diffcore import Tensor
from ssda_seg.errors import ArgumentError, ConfigurationError, IntegrityError, NumericError, StateError
from ssda_seg.losses import LossBreakdown, LossConfig
from ssda_seg.model import ModelPair, TinySegConfig, build, checkpoint_hash, load_checkpoint
from ssda_seg.selftrain import (
    METRICS_COLUMNS,
    DomainSets,
    MetricsWriter,
    PseudoLabelSet,
    SelfTrainPlan,
    TrainingContext,
    ensemble_predict,
    generate_pseudolabels,
    label_with_confidence,
    predict,
    read_pseudolabels,
    run_algorithm,
    run_round,
    write_pseudolabels,
)
from ssda_seg.selftrain.algorithm import completed_rounds, pseudolabel_dir
from ssda_seg.selftrain.trainer import round_seed


@pytest.fixture
def sets(domains: tuple[SampleSet, SampleSet]) -> DomainSets:
    source, pool = domains
    labeled, unlabeled = split_target(pool, 3, seed=0)
    validation = SampleSet(Role.VALIDATION, NUM_CLASSES, labeled.items)
    return DomainSets(source, labeled, unlabeled, validation)


def _context(config: TinySegConfig, **plan: int | bool) -> TrainingContext:
    return TrainingContext(
        setting=Setting.SSDA,
        model_config=config,
        loss_config=LossConfig(pc_warmup_steps=0),
        plan=SelfTrainPlan(**{"rounds": 1, "n_steps": 3, "n_drop": 1, **plan}),  # type: ignore[arg-type]
        batch_counts=BatchCounts(2, 2, 2),
        log_every=1,
    )


def _pseudolabels(sets: DomainSets) -> PseudoLabelSet:
    maps = {item.id: np.zeros((SIZE, SIZE), dtype=np.uint8) for item in sets.target_unlabeled}
    return PseudoLabelSet(maps, {item_id: 1.0 for item_id in maps}, provenance="0" * 64)


def _metric_rows(path: Path) -> list[list[str]]:
    with path.open(newline="") as f:
        return [row for row in csv.reader(f) if row and not row[0].startswith("#")]


def test_plan_schedule() -> None:
    plan = SelfTrainPlan()
    assert plan.lr_drop_step == 1500
    assert plan.lr_at(1499) == 1e-2
    assert plan.lr_at(1500) == pytest.approx(1e-3)
    assert plan.uses_pseudolabels(999)
    assert not plan.uses_pseudolabels(1000)
    assert SelfTrainPlan(no_pl_drop=True).uses_pseudolabels(1999)
    assert plan.total_steps == 6000


@pytest.mark.parametrize(
    "plan",
    [
        SelfTrainPlan(rounds=-1),
        SelfTrainPlan(n_drop=0),
        SelfTrainPlan(n_drop=2000),
        SelfTrainPlan(tau=0.0),
        SelfTrainPlan(tau=1.5),
        SelfTrainPlan(lr=0.0),
    ],
)
def test_invalid_plan(plan: SelfTrainPlan) -> None:
    with pytest.raises(ConfigurationError):
        plan.validate()


def test_confidence_threshold(rng: np.random.Generator) -> None:
    logits = rng.normal(scale=3.0, size=(2, NUM_CLASSES, 8, 8))
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    coverages = []
    for tau in (0.5, 0.7, 0.9):
        maps = label_with_confidence(probs, tau)
        assert maps.dtype == np.uint8
        keep = maps != 255
        np.testing.assert_array_equal(maps[keep], probs.argmax(axis=1)[keep])
        coverages.append(keep.mean())
    assert coverages == sorted(coverages, reverse=True)
    # tau = 1 keeps only certain pixels
    assert (label_with_confidence(probs, 1.0) == 255).all()


def test_generate_pseudolabels(tiny_pair: ModelPair, tiny_config: TinySegConfig, sets: DomainSets) -> None:
    result = generate_pseudolabels(tiny_pair.teacher, sets.target_unlabeled, 0.5, tiny_config, "ab" * 32)
    assert set(result.maps) == set(sets.target_unlabeled.ids)
    assert all(m.shape == (SIZE, SIZE) for m in result.maps.values())
    assert 0.0 <= result.total_coverage <= 1.0
    with pytest.raises(ArgumentError):
        generate_pseudolabels(tiny_pair.teacher, sets.target_unlabeled, 0.0, tiny_config)


def test_pseudolabels_on_disk(tmp_path: Path) -> None:
    label = np.zeros((4, 4), dtype=np.uint8)
    label[0] = 255
    label[1] = 3
    stored = PseudoLabelSet({"tgt00001": label}, {"tgt00001": 0.75}, provenance="cd" * 32, tau=0.7)
    write_pseudolabels(tmp_path / "pl", stored)
    loaded = read_pseudolabels(tmp_path / "pl", NUM_CLASSES)
    np.testing.assert_array_equal(loaded.maps["tgt00001"], label)
    assert loaded.coverage == {"tgt00001": 0.75}
    assert loaded.tau == 0.7
    loaded.require_provenance("cd" * 32)
    with pytest.raises(IntegrityError):
        loaded.require_provenance("ef" * 32)


def test_pseudolabels_missing_directory(tmp_path: Path) -> None:
    with pytest.raises(StateError):
        read_pseudolabels(tmp_path / "nowhere", NUM_CLASSES)


def test_metrics_writer_keeps_earlier_rounds(tmp_path: Path) -> None:
    path = tmp_path / "metrics.csv"
    writer = MetricsWriter(path)
    row = dict.fromkeys(METRICS_COLUMNS, 0.5)
    for k in range(2):
        writer.append({**row, "round": k, "step": 0})
    assert path.read_text().startswith("# metrics schema 1\n")
    MetricsWriter(path, keep_rounds_below=1)
    rows = _metric_rows(path)
    assert rows[0] == list(METRICS_COLUMNS)
    assert [r[0] for r in rows[1:]] == ["0"]


def test_run_round_writes_checkpoint_and_metrics(
    tiny_config: TinySegConfig, sets: DomainSets, tmp_path: Path
) -> None:
    metrics = MetricsWriter(tmp_path / "metrics.csv")
    result = run_round(0, sets, _context(tiny_config), 0, tmp_path, metrics=metrics)
    assert result.checkpoint == tmp_path / "round0.ckpt"
    assert result.checkpoint_hash == checkpoint_hash(result.checkpoint)
    assert result.model is result.pair.teacher
    assert result.pair.step == 3
    rows = _metric_rows(tmp_path / "metrics.csv")
    assert len(rows) == 4
    assert [int(r[1]) for r in rows[1:]] == [0, 1, 2]
    assert all(np.isfinite(float(v)) for r in rows[1:] for v in r)
    # round 0 starts from the seeded initialization
    assert build(tiny_config, round_seed(0, 0)).fingerprint() != result.pair.student.fingerprint()


def test_run_round_is_deterministic(tiny_config: TinySegConfig, sets: DomainSets, tmp_path: Path) -> None:
    first = run_round(0, sets, _context(tiny_config), 3, tmp_path / "a")
    second = run_round(0, sets, _context(tiny_config), 3, tmp_path / "b")
    assert first.checkpoint_hash == second.checkpoint_hash


def test_later_round_needs_pseudolabels(tiny_config: TinySegConfig, sets: DomainSets, tmp_path: Path) -> None:
    with pytest.raises(StateError):
        run_round(1, sets, _context(tiny_config), 0, tmp_path)


@pytest.mark.parametrize(("no_pl_drop", "drops"), [(False, 1), (True, 0)])
def test_pseudolabels_are_dropped(
    mocker: MockerFixture,
    tiny_config: TinySegConfig,
    sets: DomainSets,
    tmp_path: Path,
    no_pl_drop: bool,
    drops: int,
) -> None:
    spy = mocker.spy(BatchSampler, "set_target_labeled")
    context = _context(tiny_config, no_pl_drop=no_pl_drop)
    run_round(1, sets, context, 0, tmp_path, _pseudolabels(sets))
    assert spy.call_count == drops


def test_non_finite_loss_stops_the_round(
    mocker: MockerFixture, tiny_config: TinySegConfig, sets: DomainSets, tmp_path: Path
) -> None:
    objective = mocker.MagicMock()
    objective.run.return_value = LossBreakdown(total=Tensor(np.array(np.nan)))
    mocker.patch("ssda_seg.selftrain.trainer.objective_for", return_value=objective)
    with pytest.raises(NumericError):
        run_round(0, sets, _context(tiny_config), 0, tmp_path)
    assert not (tmp_path / "round0.ckpt").exists()


def test_warm_start_reuses_previous_teacher(
    mocker: MockerFixture, tiny_config: TinySegConfig, tiny_pair: ModelPair, sets: DomainSets, tmp_path: Path
) -> None:
    build_spy = mocker.patch("ssda_seg.selftrain.trainer.build", wraps=build)
    context = _context(tiny_config, warm_start=True)
    run_round(1, sets, context, 0, tmp_path, _pseudolabels(sets), previous=tiny_pair)
    assert build_spy.call_count == 0


def test_ensemble_of_one_model_matches_it(
    tiny_pair: ModelPair, tiny_config: TinySegConfig, sets: DomainSets
) -> None:
    images = np.stack([item.image.transpose(2, 0, 1) for item in sets.target_unlabeled]).astype(np.float32)
    single = predict(tiny_pair.teacher, images, tiny_config)
    np.testing.assert_array_equal(ensemble_predict(tiny_pair.teacher, tiny_pair.teacher, images, tiny_config), single)


def test_run_algorithm_and_resume(
    mocker: MockerFixture, tiny_config: TinySegConfig, sets: DomainSets, tmp_path: Path
) -> None:
    context = _context(tiny_config)
    before_last, last = run_algorithm(sets, context, 0, tmp_path)
    for name in ("round0.ckpt", "round1.ckpt", "eval_round0.txt", "eval_round1.txt", "metrics.csv"):
        assert (tmp_path / name).exists()
    assert (pseudolabel_dir(tmp_path, 1) / "coverage.txt").exists()
    assert completed_rounds(tmp_path, 1) == 2
    assert before_last.fingerprint() == load_checkpoint(tmp_path / "round0.ckpt").teacher.fingerprint()
    assert last.fingerprint() == load_checkpoint(tmp_path / "round1.ckpt").teacher.fingerprint()
    assert len(_metric_rows(tmp_path / "metrics.csv")) == 1 + 2 * 3

    # everything on disk: nothing is trained again
    trained = mocker.patch("ssda_seg.selftrain.algorithm.run_round")
    resumed = run_algorithm(sets, context, 0, tmp_path)
    trained.assert_not_called()
    assert resumed[1].fingerprint() == last.fingerprint()
    mocker.stopall()

    # lose the last round: only it is retrained, on the stored pseudolabels
    old_hash = checkpoint_hash(tmp_path / "round1.ckpt")
    (tmp_path / "round1.ckpt").unlink()
    rounds = mocker.patch("ssda_seg.selftrain.algorithm.run_round", wraps=run_round)
    relabel = mocker.patch(
        "ssda_seg.selftrain.algorithm.generate_pseudolabels", wraps=generate_pseudolabels
    )
    run_algorithm(sets, context, 0, tmp_path)
    assert rounds.call_count == 1
    assert rounds.call_args.args[0] == 1
    relabel.assert_not_called()
    assert checkpoint_hash(tmp_path / "round1.ckpt") == old_hash
    assert len(_metric_rows(tmp_path / "metrics.csv")) == 1 + 2 * 3


def test_zero_rounds_return_the_same_model(tiny_config: TinySegConfig, sets: DomainSets, tmp_path: Path) -> None:
    before_last, last = run_algorithm(sets, _context(tiny_config, rounds=0), 0, tmp_path)
    assert before_last is last
