import logging
from collections.abc import Callable
from pathlib import Path
from typing import Any

yellow = "\x1b[33;20m"
red = "\x1b[31;20m"
bold_red = "\x1b[31;1m"
green = "\u001b[32m"
blue = "\u001b[34m"


def get_formatter(color: str) -> Callable[[logging.LogRecord, bool], logging.Formatter]:
    def level_formatter(
        record: logging.LogRecord, with_location: bool
    ) -> logging.Formatter:
        reset = "\x1b[0m"
        # ssda_seg.selftrain.trainer -> selftrain.trainer
        module = record.name.partition(".")[2] or record.name
        prefix = f"{color}%(levelname)s{reset} [{module}]: %(message)s"
        if not with_location:
            return logging.Formatter(prefix)
        filepath = Path(record.pathname).resolve()
        return logging.Formatter(f"{prefix}\n        {filepath}:%(lineno)d::%(funcName)s\n")

    return level_formatter


FORMATTER = {
    logging.DEBUG: get_formatter(blue),
    logging.INFO: get_formatter(green),
    logging.WARNING: get_formatter(yellow),
    logging.ERROR: get_formatter(red),
    logging.CRITICAL: get_formatter(bold_red),
}


class CustomFormatter(logging.Formatter):
    def __init__(self, log_locations: bool) -> None:
        super().__init__()
        self.log_locations = log_locations

    def format(self, record: logging.LogRecord) -> str:
        return FORMATTER[record.levelno](record, self.log_locations).format(record)


class PlainFormatter(logging.Formatter):
    """Color-free records for log files inside run directories."""

    def __init__(self) -> None:
        super().__init__("%(asctime)s %(levelname)s %(name)s: %(message)s")


ROOT_LOG_NAME = __name__.split(".")[0]


def setup_logging(level: Any, root_log_name: str = ROOT_LOG_NAME) -> None:
    main_logger = logging.getLogger(root_log_name)
    main_logger.setLevel(level)

    # setup_logging may run twice (import + --debug), keep a single console handler
    for handler in list(main_logger.handlers):
        if isinstance(handler.formatter, CustomFormatter):
            main_logger.removeHandler(handler)

    default_handler = logging.StreamHandler()
    default_handler.setLevel(level)
    default_handler.setFormatter(
        CustomFormatter(logging.getLevelName(level) in (logging.DEBUG, "DEBUG"))
    )
    main_logger.addHandler(default_handler)

    # Pillow logs every plugin import at DEBUG
    logging.getLogger("PIL").setLevel(logging.INFO)


def add_file_handler(
    path: Path, level: Any = logging.INFO, root_log_name: str = ROOT_LOG_NAME
) -> logging.Handler:
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(PlainFormatter())
    main_logger = logging.getLogger(root_log_name)
    main_logger.addHandler(handler)
    if main_logger.getEffectiveLevel() > handler.level:
        main_logger.setLevel(handler.level)
    return handler


def remove_handler(
    handler: logging.Handler, root_log_name: str = ROOT_LOG_NAME
) -> None:
    logging.getLogger(root_log_name).removeHandler(handler)
    handler.close()
