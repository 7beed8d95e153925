from pathlib import Path

import numpy as np
import pytest
from conftest import NUM_CLASSES, SIZE, SetFactory

from ssda_seg.data import (
    IGNORE_INDEX,
    Batch,
    BatchCounts,
    BatchSampler,
    DatasetMeta,
    GapParams,
    Role,
    SampleSet,
    Setting,
    TrainingSets,
    class_frequencies,
    generate_dataset,
    generate_domains,
    generate_validation,
    load_dataset,
    load_pseudolabels,
    read_label_map,
    save_dataset,
    split_target,
    with_pseudolabels,
    write_label_map,
)
from ssda_seg.errors import ArgumentError, ConfigurationError, DataError, EmptySetError, StateError

META = DatasetMeta(
    classes=NUM_CLASSES,
    size=SIZE,
    seed=7,
    n_source=3,
    n_target=4,
    n_validation=2,
    gap=GapParams.preset("small"),
)


def test_generation_is_deterministic() -> None:
    a_src, a_tgt = generate_domains(3, 4, 4, SIZE, NUM_CLASSES, GapParams.preset("large"))
    b_src, b_tgt = generate_domains(3, 4, 4, SIZE, NUM_CLASSES, GapParams.preset("large"))
    for a, b in zip(a_src.items + a_tgt.items, b_src.items + b_tgt.items, strict=True):
        assert a.id == b.id
        assert a.image.tobytes() == b.image.tobytes()
        assert a.label is not None
        assert b.label is not None
        assert a.label.tobytes() == b.label.tobytes()


def test_generated_images_are_well_formed(domains: tuple[SampleSet, SampleSet]) -> None:
    source, target = domains
    assert source.role is Role.SOURCE
    assert target.role is Role.TARGET_POOL
    for item in source.items + target.items:
        assert item.image.shape == (SIZE, SIZE, 3)
        assert item.image.dtype == np.float32
        assert 0.0 <= item.image.min()
        assert item.image.max() <= 1.0
        assert item.label is not None
        assert item.label.shape == (SIZE, SIZE)
        assert item.label.max() < NUM_CLASSES


def test_validation_is_a_separate_stream() -> None:
    _, target = generate_domains(3, 0, 2, SIZE, NUM_CLASSES, GapParams())
    validation = generate_validation(3, 2, SIZE, NUM_CLASSES, GapParams())
    assert validation.role is Role.VALIDATION
    assert validation.ids == ["val00000", "val00001"]
    assert target.items[0].image.tobytes() != validation.items[0].image.tobytes()


def test_zero_gap_target_matches_source_statistics() -> None:
    source, target = generate_domains(0, 40, 40, SIZE, NUM_CLASSES, GapParams())
    source_mean = np.mean([item.image.mean(axis=(0, 1)) for item in source], axis=0)
    target_mean = np.mean([item.image.mean(axis=(0, 1)) for item in target], axis=0)
    np.testing.assert_allclose(source_mean, target_mean, atol=0.08)


def test_large_gap_shifts_colors() -> None:
    source, target = generate_domains(0, 40, 40, SIZE, NUM_CLASSES, GapParams.preset("large"))
    source_mean = np.mean([item.image.mean(axis=(0, 1)) for item in source], axis=0)
    target_mean = np.mean([item.image.mean(axis=(0, 1)) for item in target], axis=0)
    assert np.abs(source_mean - target_mean).max() > 0.05


@pytest.mark.parametrize(
    ("size", "classes"),
    [(30, 5), (32, 1)],
)
def test_generate_rejects_bad_arguments(size: int, classes: int) -> None:
    with pytest.raises(ArgumentError):
        generate_domains(0, 1, 1, size, classes, GapParams())


def test_unknown_gap_preset() -> None:
    with pytest.raises(ArgumentError):
        GapParams.preset("huge")


def test_class_frequencies_ignore_pixels(make_set: SetFactory) -> None:
    label = np.array([[0, 0, 1, IGNORE_INDEX], [1, 1, 2, IGNORE_INDEX]])
    freqs = class_frequencies(make_set(Role.SOURCE, [label]))
    np.testing.assert_allclose(freqs, [2 / 6, 3 / 6, 1 / 6, 0.0, 0.0])
    assert freqs.sum() == pytest.approx(1.0)


def test_class_frequencies_errors(make_set: SetFactory) -> None:
    with pytest.raises(EmptySetError):
        class_frequencies(make_set(Role.SOURCE, [np.full((2, 2), IGNORE_INDEX)]))
    with pytest.raises(DataError):
        class_frequencies(make_set(Role.SOURCE, [np.full((2, 2), NUM_CLASSES)]))


def test_split_target(domains: tuple[SampleSet, SampleSet]) -> None:
    _, pool = domains
    labeled, unlabeled = split_target(pool, 3, seed=5)
    assert len(labeled) == 3
    assert len(unlabeled) == len(pool) - 3
    assert sorted(labeled.ids + unlabeled.ids) == sorted(pool.ids)
    assert labeled.ids == [i for i in pool.ids if i in set(labeled.ids)]
    assert all(item.label is None for item in unlabeled)
    assert labeled.labeled
    again, _ = split_target(pool, 3, seed=5)
    assert again.ids == labeled.ids


@pytest.mark.parametrize("n_labeled", [0, 8])
def test_split_target_edges(domains: tuple[SampleSet, SampleSet], n_labeled: int) -> None:
    _, pool = domains
    labeled, unlabeled = split_target(pool, n_labeled, seed=0)
    assert len(labeled) == n_labeled
    assert len(unlabeled) == len(pool) - n_labeled


def test_split_target_too_many(domains: tuple[SampleSet, SampleSet]) -> None:
    _, pool = domains
    with pytest.raises(ArgumentError):
        split_target(pool, len(pool) + 1, seed=0)


def test_with_pseudolabels_appends_marked_items(domains: tuple[SampleSet, SampleSet]) -> None:
    _, pool = domains
    labeled, unlabeled = split_target(pool, 2, seed=0)
    maps = {unlabeled.items[0].id: np.zeros((SIZE, SIZE), dtype=np.uint8)}
    merged = with_pseudolabels(labeled, unlabeled, maps)
    assert merged.role is Role.TARGET_PSEUDOLABELED
    assert merged.ids == [*labeled.ids, unlabeled.items[0].id]
    assert merged.items[-1].pseudo
    assert not any(item.pseudo for item in merged.items[:2])


def test_meta_text_round_trip() -> None:
    assert DatasetMeta.from_text(META.to_text()) == META


def test_malformed_meta() -> None:
    with pytest.raises(DataError):
        DatasetMeta.from_text("classes=5\nsize=abc\n")


def test_dataset_round_trip(tmp_path: Path) -> None:
    dataset = generate_dataset(META)
    save_dataset(tmp_path, dataset)
    assert (tmp_path / "manifest.txt").read_text().splitlines()[0] == "src00000 source"
    loaded = load_dataset(tmp_path)
    assert loaded.meta == META
    for role in (Role.SOURCE, Role.TARGET_POOL, Role.VALIDATION):
        original, restored = dataset.by_role(role), loaded.by_role(role)
        assert restored.ids == original.ids
        for a, b in zip(original, restored, strict=True):
            np.testing.assert_array_equal(a.image, b.image)
            assert a.label is not None
            assert b.label is not None
            np.testing.assert_array_equal(a.label, b.label)
    # a regenerated dataset from meta.txt alone is identical
    regenerated = generate_dataset(DatasetMeta.from_text((tmp_path / "meta.txt").read_text()))
    assert regenerated.target.items[0].image.tobytes() == dataset.target.items[0].image.tobytes()


def test_load_dataset_missing_manifest(tmp_path: Path) -> None:
    with pytest.raises(StateError):
        load_dataset(tmp_path)


def test_label_map_rejects_unknown_class(tmp_path: Path) -> None:
    path = tmp_path / "bad.pgm"
    write_label_map(path, np.full((4, 4), 7, dtype=np.uint8))
    with pytest.raises(DataError):
        read_label_map(path, NUM_CLASSES)
    write_label_map(path, np.full((4, 4), IGNORE_INDEX, dtype=np.uint8))
    assert (read_label_map(path, NUM_CLASSES) == IGNORE_INDEX).all()


def test_load_pseudolabels(tmp_path: Path) -> None:
    label = np.array([[0, 1], [IGNORE_INDEX, 4]], dtype=np.uint8)
    write_label_map(tmp_path / "tgt00003.pgm", label)
    maps = load_pseudolabels(tmp_path, NUM_CLASSES)
    assert list(maps) == ["tgt00003"]
    np.testing.assert_array_equal(maps["tgt00003"], label)
    with pytest.raises(StateError):
        load_pseudolabels(tmp_path / "missing", NUM_CLASSES)


def _training_sets(domains: tuple[SampleSet, SampleSet]) -> TrainingSets:
    source, pool = domains
    labeled, unlabeled = split_target(pool, 3, seed=0)
    return TrainingSets(source, labeled, unlabeled)


def test_sampler_batches(domains: tuple[SampleSet, SampleSet]) -> None:
    sampler = BatchSampler(_training_sets(domains), Setting.SSDA, seed=0, counts=BatchCounts(2, 3, 1))
    batch = sampler.next_batch()
    assert len(batch.source) == 2
    assert len(batch.target_labeled) == 3
    assert len(batch.target_unlabeled) == 1
    assert Batch.images(batch.source).shape == (2, 3, SIZE, SIZE)
    assert Batch.labels(batch.target_labeled).dtype == np.int64
    with pytest.raises(ConfigurationError):
        Batch.labels(batch.target_unlabeled)


def test_sampler_is_seeded(domains: tuple[SampleSet, SampleSet]) -> None:
    def ids(seed: int) -> list[str]:
        sampler = BatchSampler(_training_sets(domains), Setting.SSDA, seed=seed)
        return [item.id for _ in range(5) for item in sampler.next_batch().source]

    assert ids(1) == ids(1)
    assert ids(1) != ids(2)


def test_sampler_covers_every_item_each_epoch(domains: tuple[SampleSet, SampleSet]) -> None:
    sets = _training_sets(domains)
    sampler = BatchSampler(sets, Setting.SSDA, seed=0, counts=BatchCounts(1, 1, 1))
    seen = [sampler.next_batch().target_labeled[0].id for _ in range(len(sets.target_labeled))]
    assert sorted(seen) == sorted(sets.target_labeled.ids)


def test_sampler_flip_keeps_alignment(domains: tuple[SampleSet, SampleSet]) -> None:
    sets = _training_sets(domains)
    lookup = {item.id: item for item in sets.target_labeled}
    sampler = BatchSampler(sets, Setting.SSDA, seed=0)
    for _ in range(6):
        for item in sampler.next_batch().target_labeled:
            original = lookup[item.id]
            assert original.label is not None
            flipped = np.array_equal(item.image, original.image[:, ::-1])
            kept = np.array_equal(item.image, original.image)
            assert flipped or kept
            expected = original.label[:, ::-1] if flipped and not kept else original.label
            np.testing.assert_array_equal(item.label, expected)


def test_ssl_sampler_has_no_source(domains: tuple[SampleSet, SampleSet]) -> None:
    sets = _training_sets(domains)
    sets.source = None
    batch = BatchSampler(sets, Setting.SSL, seed=0).next_batch()
    assert batch.source == []


@pytest.mark.parametrize(
    ("setting", "drop"),
    [(Setting.SSDA, "source"), (Setting.SSDA, "target_labeled"), (Setting.UDA, "source")],
)
def test_sampler_requires_sets(
    domains: tuple[SampleSet, SampleSet], make_set: SetFactory, setting: Setting, drop: str
) -> None:
    sets = _training_sets(domains)
    setattr(sets, drop, None if drop == "source" else make_set(Role.TARGET_LABELED, []))
    with pytest.raises(ConfigurationError, match=drop):
        BatchSampler(sets, setting, seed=0)


def test_sampler_swaps_labeled_stream(domains: tuple[SampleSet, SampleSet]) -> None:
    sets = _training_sets(domains)
    sampler = BatchSampler(sets, Setting.SSDA, seed=0)
    smaller = SampleSet(Role.TARGET_LABELED, NUM_CLASSES, sets.target_labeled.items[:1])
    sampler.set_target_labeled(smaller)
    ids = {item.id for _ in range(3) for item in sampler.next_batch().target_labeled}
    assert ids == {smaller.items[0].id}
