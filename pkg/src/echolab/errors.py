"""Exception types shared across the package."""


class EchoLabError(Exception):
    """Base class for all package-specific errors."""


class PgmError(EchoLabError, ValueError):
    """Malformed or unsupported PGM/PPM data."""


class SolverError(EchoLabError, RuntimeError):
    """Iterative solver failed to reach the requested tolerance.

    Carries the final relative residual so callers can decide whether the
    partial result is still usable.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FormatError(EchoLabError, ValueError):
    """Corrupted or incompatible binary echo-compression file."""
