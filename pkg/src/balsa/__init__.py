"""Bayesian learning-based safety and adaptation for control-affine vehicles.

Adaptive trajectory tracking that combines an online Bayesian model of the
dynamics error with stochastic CLF and CBF constraints solved as a small QP.
"""

from balsa.errors import (
    BalsaError,
    DegenerateCenter,
    IllConditioned,
    NotHurwitz,
    OutsideSafeSet,
    SingularGain,
    SolveFailed,
)

__version__ = "0.1.0"

__all__ = [
    "BalsaError",
    "DegenerateCenter",
    "IllConditioned",
    "NotHurwitz",
    "OutsideSafeSet",
    "SingularGain",
    "SolveFailed",
]
