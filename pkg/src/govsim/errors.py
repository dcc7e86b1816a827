class GovsimError(Exception):
    pass


class InvalidParameterError(GovsimError, ValueError):
    pass


class UndefinedRatioError(GovsimError, ZeroDivisionError):
    pass


class TopologyTooSmallError(GovsimError, ValueError):
    pass


class DegenerateNormalizationError(GovsimError, ValueError):
    pass


class InsufficientDataError(GovsimError, ValueError):
    pass


class FitRejectedError(GovsimError, ValueError):
    pass


class SolverError(GovsimError, RuntimeError):
    pass
