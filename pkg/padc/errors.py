"""Exception hierarchy shared by every padc module."""
from __future__ import annotations

from typing import Any, Optional


class PadcError(Exception):
    """Base error; ``exit_code`` is what the CLI returns for it."""

    exit_code = 2


class ConfigurationError(PadcError):
    exit_code = 1


class ShapeError(PadcError):
    pass


class StateError(PadcError):
    pass


class AmbiguityError(PadcError):
    """Spectral clusters overlap, or no tone dominates the spectrum."""


class FrequencyRangeError(PadcError):
    """A tone sits too close to DC or Nyquist for bin-cluster processing."""


class RunError(PadcError):
    def __init__(self, message: str, history: Optional[Any] = None) -> None:
        super().__init__(message)
        self.history = history


class TrainingDivergedError(RunError):
    pass


class FormatError(PadcError):
    exit_code = 3

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
