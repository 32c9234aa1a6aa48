class BalsaError(Exception):
    pass


class SingularGain(BalsaError):
    """Control gain g(z) is not safely invertible (speed below v_eps)."""


class IllConditioned(BalsaError):
    """Kernel Gram matrix could not be factorized even after adding jitter."""


class NotHurwitz(BalsaError):
    pass


class SolveFailed(BalsaError):
    pass


class OutsideSafeSet(BalsaError):
    """State lies outside the region where a reciprocal barrier is defined."""


class DegenerateCenter(OutsideSafeSet):
    """Vehicle position coincides with an obstacle center."""
