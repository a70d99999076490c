"""Exception types shared across the toolkit."""


class VsrError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(VsrError):
    """A tensor dimension does not satisfy what an operation requires.

    Carries the offending axis name plus expected/actual values so callers can
    see exactly which dimension is wrong.
    """

    def __init__(self, axis, expected, actual, context=""):
        self.axis = axis
        self.expected = expected
        self.actual = actual
        prefix = f"{context}: " if context else ""
        super().__init__(f"{prefix}axis '{axis}' expected {expected}, got {actual}")


class ConfigError(VsrError):
    """Invalid configuration; collects every violation found, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration: " + "; ".join(self.violations))


class ParseError(VsrError):
    """A file could not be decoded; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class NonFiniteError(VsrError):
    """A NaN or Inf value was produced while finite checks were enabled."""


class TrainingDiverged(VsrError):
    """Training hit a non-finite loss.

    ``last_checkpoint`` names the most recent good checkpoint, when one exists.
    """

    def __init__(self, message, last_checkpoint=None):
        self.last_checkpoint = last_checkpoint
        super().__init__(message)
