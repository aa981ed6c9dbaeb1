"""Exception hierarchy shared across the package."""


class SpecFilterError(ValueError):
    """Base class for all validation failures raised by specfilter."""


class DimensionMismatch(SpecFilterError):
    pass


class RankDeficient(SpecFilterError):
    pass


class DegenerateSignal(SpecFilterError):
    """Raised when a bound needs log ||x||^2 and the signal is zero."""


class ZeroObservedEigenvalue(SpecFilterError):
    pass


class CertificateViolated(SpecFilterError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class UnknownFamily(SpecFilterError):
    pass


class UnknownEstimator(SpecFilterError):
    pass


class ConfigError(SpecFilterError):
    pass
