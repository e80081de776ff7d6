"""Exception types shared across the package."""


class LeadtimeError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LeadtimeError):
    """A file could not be parsed. Carries path and, where known, line number."""

    def __init__(self, message, path=None, line=None):
        loc = str(path) if path is not None else "<input>"
        if line is not None:
            loc = f"{loc}:{line}"
        super().__init__(f"{loc}: {message}")
        self.path = path
        self.line = line


class ValidationError(LeadtimeError):
    """Data violated a structural invariant (times, ordering, channel counts...)."""


class DumpFormatError(LeadtimeError):
    """An embedding dump file is malformed or inconsistent with its header."""


class ConfigError(LeadtimeError):
    """An experiment or synthesis config is invalid."""


class MetricsError(LeadtimeError):
    """A metric could not be computed (e.g. no populated buckets in range)."""


class TrainingDiverged(LeadtimeError):
    """Training produced a non-finite loss."""
