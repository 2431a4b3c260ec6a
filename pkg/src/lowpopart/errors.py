"""Exception hierarchy shared by all modules."""


class LowRankError(Exception):
    """Base class for domain errors raised by this package."""


class DimensionError(LowRankError, ValueError):
    """Array shapes do not agree with the requested dimensions."""


class ContractError(LowRankError, ValueError):
    """An input violates a documented precondition."""


class SingularityError(LowRankError, ArithmeticError):
    """A covariance matrix is numerically singular."""


class SpanningError(LowRankError, ValueError):
    """The arm set does not span the full matrix space."""
