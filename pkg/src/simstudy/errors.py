"""Exception types shared across the package."""


class SimStudyError(Exception):
    """Base class for all harness errors."""


class InvalidParameter(SimStudyError, ValueError):
    pass


class InvalidState(SimStudyError, ValueError):
    pass


class ConfigError(SimStudyError, ValueError):
    pass


class IoError(SimStudyError, OSError):
    pass


class MissingBaseCase(ConfigError):
    pass


class EmptySource(SimStudyError, ValueError):
    pass


class InsufficientData(SimStudyError, ValueError):
    pass


class UnknownRepetition(SimStudyError, KeyError):
    pass


class CannotContinue(SimStudyError, ValueError):
    pass


class NonFactorialGrid(SimStudyError, ValueError):
    pass


class InsufficientMethods(SimStudyError, ValueError):
    pass


class FitError(SimStudyError):
    """Raised by a fitter; ``code`` is one of the Estimate error codes."""

    def __init__(self, code, message=""):
        super().__init__(message or code)
        self.code = code
