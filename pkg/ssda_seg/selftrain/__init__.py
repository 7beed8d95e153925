from .algorithm import (
    ensemble_predict,
    evaluate_models,
    predict,
    predict_probs,
    run_algorithm,
)
from .plan import SelfTrainPlan
from .pseudolabels import (
    PseudoLabelSet,
    generate_pseudolabels,
    label_with_confidence,
    read_pseudolabels,
    write_pseudolabels,
)
from .trainer import (
    METRICS_COLUMNS,
    DomainSets,
    MetricsWriter,
    RoundResult,
    TrainingContext,
    run_round,
)

__all__ = [
    "METRICS_COLUMNS",
    "DomainSets",
    "MetricsWriter",
    "PseudoLabelSet",
    "RoundResult",
    "SelfTrainPlan",
    "TrainingContext",
    "ensemble_predict",
    "evaluate_models",
    "generate_pseudolabels",
    "label_with_confidence",
    "predict",
    "predict_probs",
    "read_pseudolabels",
    "run_algorithm",
    "run_round",
    "write_pseudolabels",
]
