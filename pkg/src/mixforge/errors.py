"""Exception hierarchy shared by every mixforge module."""


class MixforgeError(Exception):
    """Base class for all library errors."""


class ParameterError(MixforgeError, ValueError):
    """A numeric or categorical parameter is outside its valid range."""


class ShapeError(MixforgeError, ValueError):
    """Array shapes or lengths do not agree."""


class EmptyInputError(MixforgeError, ValueError):
    """An operation received zero items where at least one is required."""


class ConfigError(MixforgeError, ValueError):
    """A policy, training or CLI configuration is malformed."""


class FormatError(MixforgeError, ValueError):
    """A file does not follow its declared binary/text format."""


class CorruptionError(FormatError):
    """A file is well-formed but carries impossible values (e.g. label >= K)."""


class TrainingDiverged(MixforgeError, RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss
