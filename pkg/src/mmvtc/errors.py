"""Exception types shared across the package."""


class RecoveryError(Exception):
    """Base class for numerical failures inside a solver run."""


class SingularSystem(RecoveryError):
    """The linear system to be solved is numerically singular.

    Raised when a Cholesky factorization fails or the estimated condition
    number of the system matrix exceeds ``COND_LIMIT``.
    """


class NotPositiveDefinite(RecoveryError):
    """A matrix required to be symmetric positive definite is not."""


class NonFinite(RecoveryError):
    """An iterate contains NaN or Inf, signalling a configuration pathology."""


class InvalidSpec(ValueError):
    """An experiment specification or generator precondition is violated."""


class EmptySet(ValueError):
    """An aggregate was requested over an empty collection."""


#: Condition-number ceiling beyond which a system counts as singular.
COND_LIMIT = 1e14
