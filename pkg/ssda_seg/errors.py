from dataclasses import dataclass
from typing import ClassVar


@dataclass(eq=False)
class SsdaError(Exception):
    message: str

    exit_code: ClassVar[int] = 1

    def __str__(self) -> str:
        return self.message


class ConfigurationError(SsdaError):
    exit_code = 2


class ArgumentError(SsdaError):
    exit_code = 2


class UsageError(SsdaError):
    exit_code = 2


class DataError(SsdaError):
    exit_code = 3


class EmptySetError(SsdaError):
    exit_code = 3


class NumericError(SsdaError):
    exit_code = 4


class IntegrityError(SsdaError):
    exit_code = 5


class StateError(SsdaError):
    exit_code = 6
