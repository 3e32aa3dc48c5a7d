"""Exception types shared across the library."""


class MrsPricingError(Exception):
    """Base class for library-specific failures."""


class ParseError(MrsPricingError):
    """Malformed input file. Carries the offending path and line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = int(line)


class FitError(MrsPricingError):
    """A fitting routine could not produce a usable estimate."""

    def __init__(self, message, best_sse=None):
        super().__init__(message)
        self.best_sse = best_sse


class CalibrationError(FitError):
    """EM calibration cannot be run on the supplied data."""


class InternalError(MrsPricingError):
    """An internal consistency check failed; indicates a bug, not bad input."""
