"""Exception hierarchy. Each class carries the CLI exit code for its category."""


class MSDIError(Exception):
    exit_code = 1


class ValidationError(MSDIError, ValueError):
    """Input data or arguments violate a documented precondition."""

    exit_code = 2


class DegenerateDataError(ValidationError):
    """Data carry no information for the requested fit (e.g. zero variance)."""


class FitError(MSDIError, RuntimeError):
    """An estimator failed to converge or produced an invalid model."""

    exit_code = 3


class SingularComponentError(FitError):
    pass


class CopulaRejectedError(FitError):
    """All candidate copulas were rejected by the goodness-of-fit test."""


class DataIOError(MSDIError, OSError):
    exit_code = 4


class NetworkError(DataIOError):
    pass


class ModelMismatchError(MSDIError):
    """A stored model document does not belong to the series it is applied to."""

    exit_code = 5
