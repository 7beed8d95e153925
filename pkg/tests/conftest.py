import logging
from collections.abc import Callable

import numpy as np
import pytest

from ssda_seg.data import GapParams, LabeledImage, Role, SampleSet, generate_domains
from ssda_seg.model import ModelPair, TinySegConfig, build

pytest_plugins = ["gradcheck"]

logging.basicConfig(level=logging.DEBUG)

NUM_CLASSES = 5
SIZE = 16


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config() -> TinySegConfig:
    return TinySegConfig(num_classes=NUM_CLASSES, base_width=4, embed_dim=8, rates=(1, 2))


@pytest.fixture
def tiny_pair(tiny_config: TinySegConfig) -> ModelPair:
    return ModelPair.from_student(build(tiny_config, seed=0))


@pytest.fixture
def domains() -> tuple[SampleSet, SampleSet]:
    return generate_domains(
        seed=0,
        n_source=6,
        n_target=8,
        size=SIZE,
        num_classes=NUM_CLASSES,
        gap=GapParams.preset("large"),
    )


SetFactory = Callable[..., SampleSet]


@pytest.fixture
def make_set() -> SetFactory:
    """Sample set with black images around the given label maps."""

    def factory(
        role: Role, labels: list[np.ndarray], num_classes: int = NUM_CLASSES
    ) -> SampleSet:
        items = [
            LabeledImage(
                f"img{i:05d}",
                np.zeros((*label.shape, 3), dtype=np.float32),
                label.astype(np.uint8),
            )
            for i, label in enumerate(labels)
        ]
        return SampleSet(role, num_classes, items)

    return factory
