"""Exception types raised across the package."""


class EyGepError(Exception):
    """Base class for all errors raised by eygep."""


class ShapeMismatch(EyGepError, ValueError):
    pass


class NonFinite(EyGepError, ValueError):
    pass


class NotSymmetric(EyGepError, ValueError):
    pass


class NotPositiveDefinite(EyGepError, ValueError):
    pass


class KTooLarge(EyGepError, ValueError):
    pass


class TooFewSamples(EyGepError, ValueError):
    pass


class TooFewViews(EyGepError, ValueError):
    pass


class SingularProjection(EyGepError, ValueError):
    pass


class ZeroOracle(EyGepError, ValueError):
    pass


class RankDeficient(EyGepError, ValueError):
    pass


class RankZero(EyGepError, ValueError):
    pass


class DegenerateData(EyGepError, ValueError):
    pass


class ZeroColumn(EyGepError, ValueError):
    pass


class InvalidLambdas(EyGepError, ValueError):
    pass


class InvalidRho(EyGepError, ValueError):
    pass


class NotConverged(EyGepError, RuntimeError):
    pass


class ConfigInvalid(EyGepError, ValueError):
    pass
