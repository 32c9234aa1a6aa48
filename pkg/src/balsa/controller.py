"""Per-step control law and the baseline variants it is compared against.

Pseudo-control is split as ``mu = mu_rm + mu_pd + mu_qp - mu_ad``:

* ``pd``    -- ``mu_rm + mu_pd``
* ``ad``    -- ``mu_rm + mu_pd - mu_ad``
* ``qp``    -- ``mu_rm + mu_pd + mu_qp`` with a zero-mean, ``sigma0`` belief
* ``rob``   -- like ``balsa`` but with zero mean and a fixed robust sigma
* ``balsa`` -- all four terms with the current learned belief
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from balsa import cbf as cbf_mod
from balsa.cbf import BarrierSpec, obstacle_rows
from balsa.clf import LyapunovCertificate, clf_row
from balsa.dynamics import ControlBox, canonical_to_vehicle
from balsa.errors import OutsideSafeSet
from balsa.learning import INPUT_STATE_CONTROL, SIGMA0, GaussianBelief, learner_input
from balsa.qp import P1_DEFAULT, P2_DEFAULT, AdmmSolver, Status, assemble, control_rows


class ControllerKind(str, enum.Enum):
    PD = "pd"
    AD = "ad"
    QP = "qp"
    ROB = "rob"
    BALSA = "balsa"

    @property
    def uses_qp(self) -> bool:
        return self in (ControllerKind.QP, ControllerKind.ROB, ControllerKind.BALSA)

    @property
    def uses_mean(self) -> bool:
        return self in (ControllerKind.AD, ControllerKind.BALSA)


class ReferencePoint(NamedTuple):
    x: np.ndarray
    acc: np.ndarray


@dataclass(frozen=True)
class BarrierSet:
    """Obstacles (as arrays, for vectorized rows) plus velocity barriers."""

    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    velocity: tuple = ()
    gamma_p: float = 1.0
    gamma: float = 1.0
    cull_radius: float = cbf_mod.CULL_RADIUS

    @classmethod
    def build(cls, obstacles: Sequence = (), v_max=None, v_min=None, gamma_p=1.0, gamma=1.0,
              cull_radius=cbf_mod.CULL_RADIUS) -> "BarrierSet":
        centers = np.array([o.center for o in obstacles], dtype=float).reshape(-1, 2)
        radii = np.array([o.r for o in obstacles], dtype=float)
        vel = []
        if v_max is not None:
            vel.append(BarrierSpec.v_max(v_max, gamma=gamma))
        if v_min is not None:
            vel.append(BarrierSpec.v_min(v_min, gamma=gamma))
        return cls(centers, radii, tuple(vel), gamma_p, gamma, cull_radius)

    def with_points(self, points, r) -> "BarrierSet":
        """Replace the obstacle set by a point list (e.g. a fresh scan) of radius ``r``."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return BarrierSet(pts, np.full(pts.shape[0], float(r)), self.velocity,
                          self.gamma_p, self.gamma, self.cull_radius)

    def min_h(self, z) -> float:
        return cbf_mod.min_obstacle_h(z, self.centers, self.radii)

    def rows(self, z, mu_d, sigma, skipped: Optional[list] = None):
        """Stacked CBF rows ``(phi0[k], phi1[k, 2])`` for every non-culled barrier.

        Obstacle rows raise :class:`OutsideSafeSet` when the state is outside
        a barrier's valid region.  A violated velocity barrier is left out of
        the step instead (braking cannot restore a minimum speed); its kind is
        appended to ``skipped`` when given.
        """
        ob = obstacle_rows(z, self.centers, self.radii, mu_d, sigma,
                           self.gamma_p, self.gamma, self.cull_radius)
        if not self.velocity:
            return ob.phi0, ob.phi1
        extra = []
        for spec in self.velocity:
            try:
                extra.append(cbf_mod.cbf_row(z, spec, mu_d, sigma))
            except OutsideSafeSet:
                if skipped is not None:
                    skipped.append(spec.kind)
        if not extra:
            return ob.phi0, ob.phi1
        phi0 = np.concatenate([ob.phi0, [r[0] for r in extra]])
        phi1 = np.vstack([ob.phi1, np.array([r[1] for r in extra])])
        return phi0, phi1


def pd_term(e, K) -> np.ndarray:
    """``mu_pd = -[K_P K_D] e``."""
    return -np.asarray(K, dtype=float) @ np.asarray(e, dtype=float)


@dataclass
class Telemetry:
    e_norm: float
    V: float
    d1: float
    d2: float
    min_h: float
    u: np.ndarray
    u_requested: np.ndarray
    sigma: np.ndarray
    model_index: int
    solver_status: str
    step_ms: float
    mu_ad: np.ndarray
    fallback: bool = False
    event: str = ""


class Controller:
    """Stateful wrapper holding the previous control and a reusable QP solver."""

    def __init__(
        self,
        kind: ControllerKind | str = ControllerKind.BALSA,
        cert: Optional[LyapunovCertificate] = None,
        box: Optional[ControlBox] = None,
        p1: float = P1_DEFAULT,
        p2: float = P2_DEFAULT,
        sigma0: float = SIGMA0,
        robust_sigma: float = 2.0,
        f_hat=None,
        input_mode: str = INPUT_STATE_CONTROL,
    ):
        self.kind = ControllerKind(kind)
        self.cert = cert or LyapunovCertificate.from_gains()
        self.K = self.cert.K
        self.box = box or ControlBox()
        self.p1, self.p2 = p1, p2
        self.sigma0 = sigma0
        self.robust_sigma = robust_sigma
        self.f_hat = f_hat
        self.input_mode = input_mode
        self.solver = AdmmSolver()
        self.u_prev = np.zeros(2)

    def reset(self):
        self.u_prev = np.zeros(2)
        self.solver.reset()

    def _belief_terms(self, z, belief: GaussianBelief):
        if self.kind == ControllerKind.PD:
            return np.zeros(2), np.zeros(2)
        if self.kind == ControllerKind.QP:
            return np.zeros(2), np.full(2, self.sigma0)
        if self.kind == ControllerKind.ROB:
            return np.zeros(2), np.full(2, self.robust_sigma)
        m, s = belief.predict(learner_input(z, self.u_prev, self.input_mode))
        return m, s

    def step(self, z, ref: ReferencePoint, belief: GaussianBelief,
             barriers: Optional[BarrierSet] = None):
        t0 = time.perf_counter()
        z = np.asarray(z, dtype=float)
        barriers = barriers or BarrierSet()
        e = z - ref.x
        mu_pd = pd_term(e, self.K)
        m, s = self._belief_terms(z, belief)
        mu_ad = m if self.kind.uses_mean else np.zeros(2)
        mu_d = ref.acc + mu_pd - mu_ad
        sigma = np.diag(s)

        d1 = d2 = float("nan")
        status = "none"
        fallback = False
        event = ""
        mu_qp = np.zeros(2)
        if self.kind.uses_qp:
            try:
                skipped: list = []
                rows = barriers.rows(z, mu_d, sigma, skipped)
                if skipped:
                    event = "velocity_barrier_violated: " + ",".join(skipped)
                problem = assemble(
                    clf_row(e, self.cert, sigma),
                    rows,
                    control_rows(z, mu_d, self.box, self.f_hat),
                    self.p1,
                    self.p2,
                )
                sol = self.solver.solve(problem)
                status = sol.status.value
                if sol.status == Status.INFEASIBLE or not np.all(np.isfinite(sol.x)):
                    fallback, event = True, "solver_failure"
                else:
                    mu_qp = sol.mu
                    d1 = sol.d1
                    d2 = sol.d2 if problem.n_cbf else 0.0
            except OutsideSafeSet as exc:
                fallback, event = True, f"outside_safe_set: {exc}"
                status = "outside_safe_set"

        if fallback:
            cmd = canonical_to_vehicle(ref.acc + mu_pd, z, self.f_hat, self.box)
            u = cmd.u.copy()
            u[1] = self.box.a_min
        else:
            cmd = canonical_to_vehicle(mu_d + mu_qp, z, self.f_hat, self.box)
            u = cmd.u
        self.u_prev = u.copy()
        step_ms = (time.perf_counter() - t0) * 1e3
        tel = Telemetry(
            e_norm=float(np.linalg.norm(e[:2])),
            V=self.cert.V(e),
            d1=d1,
            d2=d2,
            min_h=barriers.min_h(z),
            u=u,
            u_requested=cmd.requested,
            sigma=s,
            model_index=belief.index,
            solver_status=status,
            step_ms=step_ms,
            mu_ad=mu_ad,
            fallback=fallback,
            event=event,
        )
        return u, tel
