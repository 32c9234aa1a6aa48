"""Reciprocal barrier functions over the canonical state and their CBF rows.

Every barrier is written as ``B = 1 / s(z)`` for a level function ``s`` that
is positive inside the safe region:

* obstacle: ``s = gamma_p * h + dh/dt`` with ``h = |p - c| - r``
* velocity-max: ``s = v_max - v``
* velocity-min: ``s = v - v_min``

The class-K term of the CBF condition is evaluated at ``s`` so that ``B``
equals ``1/s`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from balsa.errors import DegenerateCenter, OutsideSafeSet

OBSTACLE = "obstacle"
VELOCITY_MAX = "velocity-max"
VELOCITY_MIN = "velocity-min"
KINDS = (OBSTACLE, VELOCITY_MAX, VELOCITY_MIN)

CULL_RADIUS = 10.0
_V_GUARD = 1e-9


@dataclass(frozen=True)
class Obstacle:
    center: tuple[float, float]
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("obstacle radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


@dataclass(frozen=True)
class BarrierSpec:
    kind: str
    obstacle: Optional[Obstacle] = None
    limit: float = 0.0
    gamma_p: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        if self.kind == OBSTACLE and self.obstacle is None:
            raise ValueError("obstacle barrier needs an Obstacle")
        if not (self.gamma_p > 0 and self.gamma > 0):
            raise ValueError("gamma_p and gamma must be positive")

    @classmethod
    def for_obstacle(cls, center, r, gamma_p=1.0, gamma=1.0):
        return cls(OBSTACLE, Obstacle(tuple(center), r), gamma_p=gamma_p, gamma=gamma)

    @classmethod
    def v_max(cls, limit, gamma=1.0):
        return cls(VELOCITY_MAX, limit=float(limit), gamma=gamma)

    @classmethod
    def v_min(cls, limit=0.2, gamma=1.0):
        return cls(VELOCITY_MIN, limit=float(limit), gamma=gamma)


def h_obstacle(z, obs: Obstacle) -> float:
    return float(np.hypot(z[0] - obs.center[0], z[1] - obs.center[1]) - obs.r)


def hdot_obstacle(z, obs: Obstacle) -> float:
    d = np.array([z[0] - obs.center[0], z[1] - obs.center[1]])
    rho = np.hypot(d[0], d[1])
    if rho == 0.0:
        raise DegenerateCenter("position coincides with obstacle center")
    return float(d @ np.asarray(z[2:4], dtype=float) / rho)


def h_value(z, spec: BarrierSpec) -> float:
    """Safe-set function: distance margin for obstacles, speed margin otherwise."""
    if spec.kind == OBSTACLE:
        return h_obstacle(z, spec.obstacle)
    v = float(np.hypot(z[2], z[3]))
    return spec.limit - v if spec.kind == VELOCITY_MAX else v - spec.limit


def _level_derivatives(z, spec: BarrierSpec):
    """Level function ``s`` with its gradient (4,) and Hessian (4, 4)."""
    z = np.asarray(z, dtype=float)
    vel = z[2:4]
    ds = np.zeros(4)
    d2s = np.zeros((4, 4))
    if spec.kind == OBSTACLE:
        d = z[:2] - np.asarray(spec.obstacle.center)
        rho = float(np.hypot(d[0], d[1]))
        if rho == 0.0:
            raise DegenerateCenter("position coincides with obstacle center")
        n = d / rho
        a = float(n @ vel)
        proj = (np.eye(2) - np.outer(n, n)) / rho
        w = proj @ vel
        s = spec.gamma_p * (rho - spec.obstacle.r) + a
        ds[:2] = spec.gamma_p * n + w
        ds[2:] = n
        d2s[:2, :2] = spec.gamma_p * proj - (np.outer(w, n) + np.outer(n, w)) / rho - a * proj / rho
        d2s[:2, 2:] = proj
        d2s[2:, :2] = proj
        return s, ds, d2s

    v = max(float(np.hypot(vel[0], vel[1])), _V_GUARD)
    uhat = vel / v if v > _V_GUARD else np.array([1.0, 0.0])
    sign = -1.0 if spec.kind == VELOCITY_MAX else 1.0
    s = sign * v + (spec.limit if spec.kind == VELOCITY_MAX else -spec.limit)
    ds[2:] = sign * uhat
    d2s[2:, 2:] = sign * (np.eye(2) - np.outer(uhat, uhat)) / v
    return s, ds, d2s


def barrier_level(z, spec: BarrierSpec) -> float:
    return _level_derivatives(z, spec)[0]


def barrier_value(z, spec: BarrierSpec) -> float:
    """Reciprocal barrier ``B = 1/s``; raises OutsideSafeSet when ``s <= 0``."""
    s = barrier_level(z, spec)
    if s <= 0:
        raise OutsideSafeSet(f"barrier level {s:.4g} <= 0 ({spec.kind})")
    return 1.0 / s


def barrier_derivatives(z, spec: BarrierSpec):
    """Return ``(B, dB/dz, d2B/dz2, s)`` with analytic derivatives."""
    s, ds, d2s = _level_derivatives(z, spec)
    if s <= 0:
        raise OutsideSafeSet(f"barrier level {s:.4g} <= 0 ({spec.kind})")
    B = 1.0 / s
    dB = -ds / s**2
    d2B = 2.0 * np.outer(ds, ds) / s**3 - d2s / s**2
    return B, dB, d2B, s


def cbf_row(z, spec: BarrierSpec, mu_d, sigma, trace: bool = True) -> tuple[float, np.ndarray]:
    """Coefficients ``(phi0, phi1)`` of ``phi0 + phi1 @ mu_qp <= d2``.

    ``phi0 = dB'(A0 z + G mu_d) - gamma/s + tr(G S S' G' d2B)/2`` and
    ``phi1 = dB' G`` where ``A0 z`` is ``[vx, vy, 0, 0]``.
    """
    z = np.asarray(z, dtype=float)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    _, dB, d2B, s = barrier_derivatives(z, spec)
    phi0 = float(dB[:2] @ z[2:4] + dB[2:] @ np.asarray(mu_d, dtype=float)) - spec.gamma / s
    if trace:
        phi0 += 0.5 * float(np.sum((sigma @ sigma.T) * d2B[2:, 2:]))
    return phi0, dB[2:].copy()


@dataclass
class ObstacleRows:
    phi0: np.ndarray
    phi1: np.ndarray
    h: np.ndarray
    s: np.ndarray
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def obstacle_rows(
    z,
    centers,
    radii,
    mu_d,
    sigma,
    gamma_p: float = 1.0,
    gamma: float = 1.0,
    cull_radius: float = CULL_RADIUS,
) -> ObstacleRows:
    """Vectorized :func:`cbf_row` for many circular obstacles.

    Obstacles whose ``h`` exceeds ``cull_radius`` are dropped; ``index`` maps
    the kept rows back to the input order.
    """
    z = np.asarray(z, dtype=float)
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    radii = np.broadcast_to(np.asarray(radii, dtype=float), (centers.shape[0],))
    d = z[:2] - centers
    rho = np.hypot(d[:, 0], d[:, 1])
    h = rho - radii
    keep = np.flatnonzero(h <= cull_radius)
    d, rho, h = d[keep], rho[keep], h[keep]
    if np.any(rho == 0.0):
        raise DegenerateCenter("position coincides with obstacle center")
    vel = z[2:4]
    n = d / rho[:, None]
    a = n @ vel
    w = (vel - a[:, None] * n) / rho[:, None]
    s = gamma_p * h + a
    if np.any(s <= 0):
        raise OutsideSafeSet(f"barrier level {s.min():.4g} <= 0 (obstacle)")
    inv2 = 1.0 / s**2
    dBp = -(gamma_p * n + w) * inv2[:, None]
    dBv = -n * inv2[:, None]
    mu_d = np.asarray(mu_d, dtype=float)
    phi0 = dBp @ vel + dBv @ mu_d - gamma / s
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    SS = sigma @ sigma.T
    # d2B over the velocity block is 2 n n' / s^3
    phi0 += np.einsum("ki,ij,kj->k", n, SS, n) / s**3
    return ObstacleRows(phi0=phi0, phi1=dBv, h=h, s=s, index=keep)


def min_obstacle_h(z, centers, radii) -> float:
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if centers.shape[0] == 0:
        return float("inf")
    return float(np.min(np.hypot(z[0] - centers[:, 0], z[1] - centers[:, 1]) - radii))


def stack_rows(rows: Sequence[tuple[float, np.ndarray]]):
    if not rows:
        return np.zeros(0), np.zeros((0, 2))
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])
