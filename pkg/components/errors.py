"""Exception hierarchy for the receiver library and the experiment harness."""


class ReceiverError(Exception):
    """Base class for every error raised by the library."""


class DimensionError(ReceiverError):
    """An array does not have the shape an operation requires."""


class ParameterError(ReceiverError):
    """A parameter lies outside the domain an operation accepts."""


class DetectionError(ReceiverError):
    """A frame cannot be decoded (no paths detected, non-finite gains)."""


class TrainingError(ReceiverError):
    """Doppler regressor training diverged."""

    def __init__(self, message: str, epoch: int, history: list[float]) -> None:
        super().__init__(f'{message} (epoch {epoch}, validation history {history})')
        self.epoch = epoch
        self.history = history


class ModelFormatError(ReceiverError):
    """A persisted model file is truncated or has an unknown header."""


class ConfigError(ReceiverError):
    """An experiment configuration file or value is invalid."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line
