"""Low-rank trace regression, B-optimal experimental design and low-rank bandits."""
from . import algos, design, envs, estimators, matcore
from .errors import ContractError, DimensionError, LowRankError, SingularityError, SpanningError

__version__ = "0.1.0"

__all__ = [
    "algos", "design", "envs", "estimators", "matcore",
    "ContractError", "DimensionError", "LowRankError", "SingularityError", "SpanningError",
]
