"""Exception hierarchy shared by every stage."""


class NoiseBenchError(Exception):
    """Base class for all package errors."""


class FormatError(NoiseBenchError, ValueError):
    """A CSV file does not follow the dataset layout."""


class ParseError(NoiseBenchError, ValueError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyDataError(NoiseBenchError, ValueError):
    pass


class InvariantError(NoiseBenchError, ValueError):
    pass


class IoError(NoiseBenchError, OSError):
    pass


class ConfigError(NoiseBenchError, ValueError):
    pass


class InputError(NoiseBenchError, ValueError):
    pass


class ManifestError(NoiseBenchError, ValueError):
    pass


class StageError(NoiseBenchError):
    """Raised by the pipeline runner; names the failing stage and its input."""

    def __init__(self, stage, subject, cause):
        super().__init__(f"stage {stage!r} failed on {subject}: {cause}")
        self.stage = stage
        self.subject = subject
        self.cause = cause
