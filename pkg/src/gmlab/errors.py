"""Exception types raised by gmlab."""


class GMLabError(Exception):
    """Base class for all gmlab errors."""


class RankDeficient(GMLabError):
    pass


class LeaveOneOutRankDeficient(RankDeficient):
    pass


class NotPositiveDefinite(GMLabError):
    pass


class NotSymmetric(GMLabError):
    pass


class DimensionMismatch(GMLabError, ValueError):
    pass


class SupportTooLarge(GMLabError):
    pass


class FourthMomentsUnavailable(GMLabError):
    pass


class ConstraintViolated(GMLabError):
    """A quadratic perturbation fails ``tr(H) = 0`` or ``X'HX = 0``."""

    def __init__(self, constraint, index, residual):
        self.constraint = constraint
        self.index = index
        self.residual = residual
        super().__init__(
            f"H[{index}] violates {constraint} constraint (residual {residual:.3e})"
        )


class IoError(GMLabError):
    """Unreadable or malformed input file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
