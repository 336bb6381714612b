"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: domain/configuration errors exit 1,
I/O and format errors exit 2, verification failures exit 3.
"""


class EvClipError(Exception):
    """Base class for all package errors."""


class DomainError(EvClipError, ValueError):
    """An input violates a mathematical precondition (empty set, zero norm, ...)."""


class ConfigurationError(EvClipError, ValueError):
    """Dimensions, hyperparameters, or config files are inconsistent."""


class FormatError(EvClipError, ValueError):
    """A binary or text artifact on disk does not match its declared format."""


class VerificationError(EvClipError, RuntimeError):
    """A self-check (gradient check, invariant suite) reported a failure."""
