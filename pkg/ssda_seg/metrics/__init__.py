from .confusion import (
    ConfusionMatrix,
    IoUReport,
    accumulate,
    evaluate,
    format_report,
    iou,
    parse_report,
    pixel_accuracy,
    write_report,
)

__all__ = [
    "ConfusionMatrix",
    "IoUReport",
    "accumulate",
    "evaluate",
    "format_report",
    "iou",
    "parse_report",
    "pixel_accuracy",
    "write_report",
]
