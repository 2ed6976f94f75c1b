"""Exception types shared across the library."""


class DimensionMismatch(ValueError):
    """Matrix or vector shapes are incompatible with the operation."""


class ContractError(ValueError):
    """An input violates a documented precondition."""


class ConfigError(ValueError):
    """A configuration value or combination is invalid."""


class DegenerateRankError(RuntimeError):
    """The input matrix has fewer numerically nonzero singular values than requested."""

    def __init__(self, message: str, numerical_rank: int):
        super().__init__(message)
        self.numerical_rank = numerical_rank


class DiversityError(RuntimeError):
    """Task directions failed to reach the diversity floor after resampling."""

    def __init__(self, message: str, best_sigma: float):
        super().__init__(message)
        self.best_sigma = best_sigma


class AllSuppressedError(RuntimeError):
    """Too few adversarial fits survived suppression to extract a rank-r subspace."""

    def __init__(self, message: str, epsilon: float, surviving: int):
        super().__init__(message)
        self.epsilon = epsilon
        self.surviving = surviving


class NotApplicableError(RuntimeError):
    """The operation does not apply to this configuration."""
