"""Kinematic bicycle in canonical double-integrator coordinates.

The canonical state is ``z = [px, py, vx, vy]``.  With controls ``u = [c, a]``
(curvature ``tan(psi)/L`` and longitudinal acceleration) the velocity block
obeys ``d(vx, vy)/dt = f(z) + g(z) u`` where ``g`` follows from differentiating
``(v cos(theta), v sin(theta))``.  The simulated plant adds a heading-dependent
drift to the right on top of the nominal model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from balsa.errors import SingularGain

V_EPS = 0.1
DEFAULT_DT = 0.02

ModelFn = Callable[[np.ndarray], np.ndarray]


def zero_model(z: np.ndarray) -> np.ndarray:
    return np.zeros(2)


def speed_heading(z: np.ndarray) -> tuple[float, float]:
    """Return ``(v, theta)`` encoded by the velocity block of ``z``."""
    vx, vy = float(z[2]), float(z[3])
    return float(np.hypot(vx, vy)), float(np.arctan2(vy, vx))


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def bicycle_to_canonical(pose) -> np.ndarray:
    """Map a bicycle pose ``(px, py, theta, v)`` to ``(px, py, vx, vy)``."""
    px, py, theta, v = (float(p) for p in pose)
    return np.array([px, py, v * np.cos(theta), v * np.sin(theta)])


def canonical_to_bicycle(z: np.ndarray) -> np.ndarray:
    v, theta = speed_heading(z)
    return np.array([z[0], z[1], theta, v])


def _gain(theta: float, v: float) -> np.ndarray:
    s, c = np.sin(theta), np.cos(theta)
    v2 = v * v
    return np.array([[-v2 * s, c], [v2 * c, s]])


def control_gain(z: np.ndarray, clamp: bool = False, v_eps: float = V_EPS) -> np.ndarray:
    """Control gain ``g(z)`` mapping ``(c, a)`` to velocity-block acceleration.

    ``det(g) = -v**2``, so the matrix is singular at rest.  Below ``v_eps`` a
    :class:`SingularGain` is raised unless ``clamp`` is set, in which case the
    speed entering the ``v**2`` terms is replaced by ``v_eps``.
    """
    v, theta = speed_heading(z)
    if v < v_eps:
        if not clamp:
            raise SingularGain(f"speed {v:.3g} below v_eps={v_eps}")
        v = v_eps
    return _gain(theta, v)


def plant_gain(z: np.ndarray) -> np.ndarray:
    """Exact ``g(z)`` used by the simulated plant (no speed clamping)."""
    v, theta = speed_heading(z)
    return _gain(theta, v)


def control_gain_inv(z: np.ndarray, clamp: bool = True, v_eps: float = V_EPS) -> np.ndarray:
    v, theta = speed_heading(z)
    if v < v_eps:
        if not clamp:
            raise SingularGain(f"speed {v:.3g} below v_eps={v_eps}")
        v = v_eps
    s, c = np.sin(theta), np.cos(theta)
    # closed-form inverse of [[-v^2 s, c], [v^2 c, s]]
    return np.array([[-s / (v * v), c / (v * v)], [c, s]])


def true_disturbance(z: np.ndarray) -> np.ndarray:
    """Drift added to the velocity block of the simulated "true" vehicle."""
    v, theta = speed_heading(z)
    body = np.array([-np.tanh(v * v), -(0.1 + v)])
    return rotation(theta) @ body


@dataclass(frozen=True)
class ControlBox:
    """Box ``|c| <= c_max``, ``a_min <= a <= a_max`` written as ``H u <= b``."""

    c_max: float = 2.5
    a_min: float = -4.0
    a_max: float = 4.0

    @property
    def H(self) -> np.ndarray:
        return np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])

    @property
    def b(self) -> np.ndarray:
        return np.array([self.c_max, self.c_max, self.a_max, -self.a_min])

    @property
    def lower(self) -> np.ndarray:
        return np.array([-self.c_max, self.a_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.c_max, self.a_max])

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(self.H @ u <= self.b + tol))


class VehicleCommand(NamedTuple):
    u: np.ndarray
    requested: np.ndarray
    clamped: bool


def canonical_to_vehicle(
    mu: np.ndarray,
    z: np.ndarray,
    f_hat: Optional[ModelFn] = None,
    box: Optional[ControlBox] = None,
    clamp_speed: bool = True,
) -> VehicleCommand:
    """Pre-control law ``u = g(z)^-1 (mu - f_hat(z))`` followed by box saturation."""
    f = np.zeros(2) if f_hat is None else np.asarray(f_hat(z), dtype=float)
    requested = control_gain_inv(z, clamp=clamp_speed) @ (np.asarray(mu, dtype=float) - f)
    if box is None:
        return VehicleCommand(requested, requested, False)
    u = box.clip(requested)
    return VehicleCommand(u, requested, bool(np.any(u != requested)))


def drift(
    z: np.ndarray,
    u: np.ndarray,
    f_hat: Optional[ModelFn] = None,
    disturbance: Optional[ModelFn] = true_disturbance,
) -> np.ndarray:
    """Deterministic rate ``dz/dt`` of the plant."""
    acc = plant_gain(z) @ np.asarray(u, dtype=float)
    if f_hat is not None:
        acc = acc + f_hat(z)
    if disturbance is not None:
        acc = acc + disturbance(z)
    return np.concatenate([z[2:4], acc])


def step_sde(
    z: np.ndarray,
    u: np.ndarray,
    dt: float,
    sigma=None,
    rng=None,
    f_hat: Optional[ModelFn] = None,
    disturbance: Optional[ModelFn] = true_disturbance,
) -> np.ndarray:
    """One Euler-Maruyama step of the plant.

    Positions advance with the current velocity; velocities advance with the
    drift plus ``sigma @ w * sqrt(dt)`` for a standard normal ``w`` drawn from
    ``rng`` (a ``numpy.random.Generator`` or a seed).  ``sigma=None`` or an
    all-zero matrix gives the plain Euler step and draws nothing.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = np.asarray(z, dtype=float)
    z_next = z + dt * drift(z, u, f_hat, disturbance)
    if sigma is not None:
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        if sigma.shape == (1, 1):
            sigma = sigma[0, 0] * np.eye(2)
        if np.any(sigma):
            rng = np.random.default_rng(rng)
            z_next[2:4] += sigma @ rng.standard_normal(2) * np.sqrt(dt)
    return z_next
