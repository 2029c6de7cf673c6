"""Exception hierarchy shared across the package."""


class LexiganError(Exception):
    pass


class ShapeError(LexiganError, ValueError):
    """Tensor dimensions do not line up for the requested operation."""


class ValidationError(LexiganError, ValueError):
    """An argument violates a documented precondition."""


class UsageError(LexiganError, RuntimeError):
    """An API was called in a way it does not support."""


class FormatError(LexiganError, ValueError):
    """A file has the wrong codec/rate/layout for this reader."""


class ParseError(LexiganError, ValueError):
    """A file is structurally broken (truncated chunk, bad header)."""


class CheckpointError(LexiganError, ValueError):
    """A checkpoint file failed to load (bad magic, version, truncation)."""


class TrainingFault(LexiganError, RuntimeError):
    """Training hit a non-finite loss or activation.

    Carries the step index so the faulting cycle can be located in the log.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
