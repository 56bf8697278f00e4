"""Exception hierarchy shared by every module."""

from typing import Any, Dict, Optional


class AdvGanError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AdvGanError, ValueError):
    pass


class NumericError(AdvGanError, ArithmeticError):
    pass


class ConfigError(AdvGanError, ValueError):
    pass


class ContractError(AdvGanError, RuntimeError):
    pass


class AudioFormatError(AdvGanError, ValueError):
    pass


class FormatError(AdvGanError, ValueError):
    pass


class CheckpointShapeError(FormatError):
    pass


class CorpusError(AdvGanError, ValueError):
    pass


class TrainingDivergedError(NumericError):
    """Non-finite loss during training. `diagnostics` holds the dump written to the log."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
