"""Exception hierarchy shared by all evego modules."""

from __future__ import annotations


class EvegoError(Exception):
    """Base class for all errors raised by this package."""


class OutOfBoundsError(EvegoError):
    """An event coordinate lies outside the declared sensor geometry."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"event {index} out of sensor bounds")


class NegativeTimestampError(EvegoError):
    """An event carries a negative timestamp."""

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"event {index} has a negative timestamp")


class GeometryMismatchError(EvegoError):
    """Two grids (frames, masks, geometries) disagree in width or height."""


class ShapeMismatchError(EvegoError):
    """Array arguments do not have the shapes the operation requires."""


class SideMismatchError(EvegoError):
    """Hand parameters for different sides were compared."""


class MissingWristError(EvegoError):
    """Root-relative metric requested without wrist positions."""


class SampleCountMismatchError(EvegoError):
    """Prediction and ground-truth streams have different lengths."""


class ParseError(EvegoError):
    """A container or text format could not be parsed."""


class InvariantViolationError(EvegoError):
    """A loaded object violates one of its documented invariants."""


class NonFiniteError(EvegoError):
    """A computation produced NaN or Inf."""

    def __init__(self, message: str = "non-finite value", step: int | None = None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class TapeExhaustedError(EvegoError):
    """backward() was called twice on the same computation graph."""


class IndexOutOfRangeError(EvegoError, IndexError):
    """A window or sample index is outside the valid range."""


class ConfigError(EvegoError):
    """An invalid configuration value was supplied."""


class MissingFileError(EvegoError):
    """A file referenced by a manifest does not exist."""

    def __init__(self, sample_id: str, path: str):
        self.sample_id = sample_id
        self.path = path
        super().__init__(f"sample {sample_id!r}: missing file {path}")
