"""Exception hierarchy shared by every module."""


class SgmcmcError(Exception):
    """Base class for library errors."""


class ModelEvaluationError(SgmcmcError, ValueError):
    """A model produced a non-finite gradient or log-density."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigurationError(SgmcmcError, ValueError):
    pass


class StateError(SgmcmcError, RuntimeError):
    pass


class CapabilityError(SgmcmcError, TypeError):
    pass


class PreconditionError(SgmcmcError, ValueError):
    pass


class DegenerateCovarianceError(SgmcmcError, ValueError):
    pass


class DivergenceError(SgmcmcError, FloatingPointError):
    """Raised when an iterate becomes non-finite or leaves the 1e8 ball.

    ``record`` carries whatever was produced before the failure.
    """

    def __init__(self, message, iteration=None, record=None):
        super().__init__(message)
        self.iteration = iteration
        self.record = record
