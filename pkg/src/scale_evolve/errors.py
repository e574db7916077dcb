"""Exception hierarchy shared by all modules."""


class ScaleEvolveError(Exception):
    """Base class for all library errors."""


class RangeOverflow(ScaleEvolveError):
    """A weight e^(alpha*n) would overflow 64-bit floating point."""


class InvalidScalePair(ScaleEvolveError):
    """alpha_prime >= alpha where a strict loss of regularity is required."""


class InvalidInput(ScaleEvolveError):
    """Malformed argument (empty grid, bad shape, inconsistent sizes)."""


class TimeOrderViolation(ScaleEvolveError):
    """t < s passed to a forward propagation."""


class OracleFailure(ScaleEvolveError):
    """The brute-force ODE oracle could not meet its local error budget."""


class ExistenceHorizonExceeded(ScaleEvolveError):
    """Requested span t - s is at or beyond the horizon T(alpha', alpha)."""


class HorizonTooTight(ScaleEvolveError):
    """(t - s) / T exceeds the configured rho_max safety margin."""


class HorizonExhausted(ScaleEvolveError):
    """Global stepping cannot reach the requested time.

    Carries the maximal reachable time in ``reachable_t``.
    """

    def __init__(self, message: str, reachable_t: float):
        super().__init__(message)
        self.reachable_t = reachable_t


class ContractionCertificateFailed(ScaleEvolveError):
    """Sampled propagator norms exceed the claimed contraction bound."""


class ClosureUnsound(ScaleEvolveError):
    """Hierarchy truncation dropped more mass than the configured budget."""


class TruncationUnsoundWarning(UserWarning):
    """A configuration larger than the stored truncation was requested."""
