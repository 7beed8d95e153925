"""Dataset directories: ``images/<id>.ppm``, ``labels/<id>.pgm``,
``manifest.txt`` (``<id> <role>`` per line) and ``meta.txt`` (key=value).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ssda_seg.errors import DataError, StateError

from .generator import GapParams, generate_domains, generate_validation
from .sampleset import IGNORE_INDEX, LabeledImage, Role, SampleSet

log = logging.getLogger(__name__)

STORED_ROLES = (Role.SOURCE, Role.TARGET_POOL, Role.VALIDATION)


@dataclass
class DatasetMeta:
    classes: int
    size: int
    seed: int
    n_source: int
    n_target: int
    n_validation: int
    gap: GapParams = field(default_factory=GapParams)

    def to_text(self) -> str:
        values = {k: v for k, v in asdict(self).items() if k != "gap"}
        values.update({f"gap_{k}": v for k, v in asdict(self.gap).items()})
        return "".join(f"{key}={values[key]}\n" for key in sorted(values))

    @staticmethod
    def from_text(text: str) -> DatasetMeta:
        values = dict(
            line.split("=", 1) for line in text.splitlines() if line.strip() and not line.startswith("#")
        )
        try:
            gap = GapParams(
                **{
                    key: float(values.pop(f"gap_{key}"))
                    for key in ("color_shift", "gamma", "noise", "freq_skew")
                }
            )
            return DatasetMeta(
                classes=int(values["classes"]),
                size=int(values["size"]),
                seed=int(values["seed"]),
                n_source=int(values["n_source"]),
                n_target=int(values["n_target"]),
                n_validation=int(values["n_validation"]),
                gap=gap,
            )
        except (KeyError, ValueError) as e:
            msg = f"malformed meta.txt: {e}"
            raise DataError(msg) from e


@dataclass
class Dataset:
    meta: DatasetMeta
    source: SampleSet
    target: SampleSet
    validation: SampleSet

    def by_role(self, role: Role) -> SampleSet:
        return {
            Role.SOURCE: self.source,
            Role.TARGET_POOL: self.target,
            Role.VALIDATION: self.validation,
        }[role]


def generate_dataset(meta: DatasetMeta) -> Dataset:
    source, target = generate_domains(
        meta.seed, meta.n_source, meta.n_target, meta.size, meta.classes, meta.gap
    )
    validation = generate_validation(
        meta.seed, meta.n_validation, meta.size, meta.classes, meta.gap
    )
    return Dataset(meta, source, target, validation)


def write_image(path: Path, image: np.ndarray) -> None:
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")


def read_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "RGB":
            msg = f"{path}: expected an 8-bit RGB image, got mode {img.mode}"
            raise DataError(msg)
        return np.asarray(img, dtype=np.float32) / 255.0


def write_label_map(path: Path, label: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(label, dtype=np.uint8)).save(path, format="PPM")


def read_label_map(path: Path, num_classes: int) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode != "L":
            msg = f"{path}: expected an 8-bit gray map, got mode {img.mode}"
            raise DataError(msg)
        label = np.asarray(img, dtype=np.uint8).copy()
    bad = (label >= num_classes) & (label != IGNORE_INDEX)
    if bad.any():
        msg = f"{path}: label value {int(label[bad][0])} outside 0..{num_classes - 1}"
        raise DataError(msg)
    return label


def save_dataset(root: Path, dataset: Dataset) -> None:
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    manifest = []
    for role in STORED_ROLES:
        for item in dataset.by_role(role).items:
            write_image(root / "images" / f"{item.id}.ppm", item.image)
            if item.label is not None:
                write_label_map(root / "labels" / f"{item.id}.pgm", item.label)
            manifest.append(f"{item.id} {role.value}\n")
    (root / "manifest.txt").write_text("".join(manifest))
    (root / "meta.txt").write_text(dataset.meta.to_text())
    log.info(f"wrote {len(manifest)} images to {root}")


def load_dataset(root: Path) -> Dataset:
    if not (root / "manifest.txt").exists():
        msg = f"{root} is not a dataset directory (manifest.txt missing)"
        raise StateError(msg)
    meta = DatasetMeta.from_text((root / "meta.txt").read_text())
    sets = {role: SampleSet(role, meta.classes) for role in STORED_ROLES}
    for lineno, line in enumerate((root / "manifest.txt").read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            item_id, role_name = line.split()
            role = Role(role_name)
        except ValueError as e:
            msg = f"manifest.txt:{lineno}: cannot parse {line!r}"
            raise DataError(msg) from e
        if role not in sets:
            msg = f"manifest.txt:{lineno}: role {role_name} is not stored in datasets"
            raise DataError(msg)
        image = read_image(root / "images" / f"{item_id}.ppm")
        label_path = root / "labels" / f"{item_id}.pgm"
        label = read_label_map(label_path, meta.classes) if label_path.exists() else None
        sets[role].items.append(LabeledImage(item_id, image, label))
    return Dataset(meta, sets[Role.SOURCE], sets[Role.TARGET_POOL], sets[Role.VALIDATION])


def load_pseudolabels(directory: Path, num_classes: int) -> dict[str, np.ndarray]:
    if not directory.is_dir():
        msg = f"pseudolabel directory {directory} does not exist"
        raise StateError(msg)
    return {
        path.stem: read_label_map(path, num_classes)
        for path in sorted(directory.glob("*.pgm"))
    }
