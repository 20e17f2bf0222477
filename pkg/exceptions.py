"""Exception hierarchy shared by every module.

The two families map onto CLI exit codes: configuration and precondition
problems exit with 2, numerical failures exit with 3.
"""


class EulerModelError(Exception):
    """Base class for all errors raised by the simulator"""

    exit_code: int = 1


class ConfigError(EulerModelError):
    """Invalid run configuration or violated precondition"""

    exit_code = 2


class DomainError(ConfigError):
    """Argument outside the domain of a formula"""


class BandRangeError(ConfigError):
    """Band range k..l not inside 1..t"""


class LimitExceededError(ConfigError):
    """Exact-prime mode requested above the configured cap"""


class HypothesisViolatedError(ConfigError):
    """A proposition's hypotheses do not hold for the query"""


class NumericalError(EulerModelError):
    """A numerical routine could not deliver a trustworthy result"""

    exit_code = 3


class SieveOverflowError(NumericalError):
    """Sieve limit outside the 64-bit integer range"""


class NotPositiveDefiniteError(NumericalError):
    """Toeplitz covariance could not be factorized"""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class FactorizationMissingError(NumericalError):
    """A covariance without a factor was handed to the sampler"""


class GridTooLargeError(NumericalError):
    """The grid exceeds the dense factorization limit"""


class ResolutionError(NumericalError):
    """Ballot DP value grid is too coarse or too narrow"""


class QuadratureError(NumericalError):
    """Numerical quadrature missed its tolerance"""


class RankDeficiencyError(NumericalError):
    """Least-squares design matrix is rank deficient"""


class InsufficientHitsError(NumericalError):
    """Too few Monte Carlo hits for a reliable interval"""


class CacheError(NumericalError):
    """Cache file missing, corrupt or from another format version"""
