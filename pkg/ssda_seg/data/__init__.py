from .generator import GAP_PRESETS, GapParams, generate_domains, generate_validation
from .sampler import Batch, BatchCounts, BatchSampler, Setting, TrainingSets
from .sampleset import (
    IGNORE_INDEX,
    LabeledImage,
    Role,
    SampleSet,
    class_frequencies,
    split_target,
    with_pseudolabels,
)
from .storage import (
    Dataset,
    DatasetMeta,
    generate_dataset,
    load_dataset,
    load_pseudolabels,
    read_label_map,
    save_dataset,
    write_label_map,
)

__all__ = [
    "GAP_PRESETS",
    "IGNORE_INDEX",
    "Batch",
    "BatchCounts",
    "BatchSampler",
    "Dataset",
    "DatasetMeta",
    "GapParams",
    "LabeledImage",
    "Role",
    "SampleSet",
    "Setting",
    "TrainingSets",
    "class_frequencies",
    "generate_dataset",
    "generate_domains",
    "generate_validation",
    "load_dataset",
    "load_pseudolabels",
    "read_label_map",
    "save_dataset",
    "split_target",
    "with_pseudolabels",
    "write_label_map",
]
