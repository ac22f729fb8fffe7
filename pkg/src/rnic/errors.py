"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific type that applies.
"""


class RnicError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(RnicError):
    """Caller passed arguments that violate an operation's contract."""


class ConfigurationError(RnicError):
    """Model or layer wiring is inconsistent (shape or mask mismatch)."""


class FormatError(RnicError):
    """A file (bitstream, parameter container, patch set) is malformed."""


class DecodeError(FormatError):
    """Compressed payload cannot be decoded (truncated or corrupt)."""


class ModelMismatchError(RnicError):
    """Model binding check failed (content hashes disagree)."""


class TrainingDiverged(RnicError):
    """Training loss became non-finite; carries the last good step index."""

    def __init__(self, message, last_good_step=None):
        super().__init__(message)
        self.last_good_step = last_good_step
