"""CLF-CBF quadratic program and a dense ADMM solver for it.

Decision vector ``x = (mu1, mu2, d1, d2)``.  The objective is
``mu'mu + p1 d1^2 + p2 d2^2`` and every constraint is a row ``A_i x <= u_i``:

* CLF row ``psi0 + psi1 mu <= d1`` -> ``[psi1, -1, 0] x <= -psi0``
* CBF rows ``phi0 + phi1 mu <= d2`` -> ``[phi1, 0, -1] x <= -phi0``
* control rows ``H ginv mu <= b - H ginv (mu_d - f_hat)``

The solver is an operator-splitting (ADMM) method in the style of OSQP with
diagonal equilibration, adaptive step size and a polishing step that solves
the KKT system on the detected active set.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from balsa.dynamics import ControlBox, control_gain_inv

P1_DEFAULT = 1.0
P2_DEFAULT = 1e2
N_VARS = 4


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    u: np.ndarray
    n_clf: int = 0
    n_cbf: int = 0
    n_ctrl: int = 0

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ self.P @ x) + float(self.q @ x)

    def dump(self) -> str:
        """Plain-text rendering of the problem for offline debugging."""
        lines = [f"# qp n={N_VARS} m={self.m} clf={self.n_clf} cbf={self.n_cbf} ctrl={self.n_ctrl}"]
        lines.append("P_diag " + " ".join(repr(float(v)) for v in np.diag(self.P)))
        lines.append("q " + " ".join(repr(float(v)) for v in self.q))
        for i in range(self.m):
            kind = "clf" if i < self.n_clf else ("cbf" if i < self.n_clf + self.n_cbf else "ctrl")
            row = " ".join(repr(float(v)) for v in self.A[i])
            lines.append(f"row {kind} {row} <= {float(self.u[i])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "QpProblem":
        P_diag = q = None
        rows, bounds, kinds = [], [], []
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "P_diag":
                P_diag = [float(v) for v in parts[1:]]
            elif parts[0] == "q":
                q = [float(v) for v in parts[1:]]
            elif parts[0] == "row":
                kinds.append(parts[1])
                rows.append([float(v) for v in parts[2:-2]])
                bounds.append(float(parts[-1]))
        return cls(
            P=np.diag(P_diag),
            q=np.array(q),
            A=np.array(rows, dtype=float).reshape(-1, N_VARS),
            u=np.array(bounds, dtype=float),
            n_clf=kinds.count("clf"),
            n_cbf=kinds.count("cbf"),
            n_ctrl=kinds.count("ctrl"),
        )


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: Status
    iterations: int = 0
    polished: bool = False
    kkt: dict = field(default_factory=dict)

    @property
    def mu(self) -> np.ndarray:
        return self.x[:2]

    @property
    def d1(self) -> float:
        return float(self.x[2])

    @property
    def d2(self) -> float:
        return float(self.x[3])


def control_rows(z, mu_d, box: ControlBox, f_hat=None):
    """Rows ``(M, rhs)`` so that ``M mu_qp <= rhs`` iff the realized ``u`` is in the box."""
    ginv = control_gain_inv(z, clamp=True)
    f = np.zeros(2) if f_hat is None else np.asarray(f_hat(z), dtype=float)
    M = box.H @ ginv
    rhs = box.b - M @ (np.asarray(mu_d, dtype=float) - f)
    return M, rhs


def assemble(
    clf: Optional[tuple[float, np.ndarray]],
    cbf_rows: Sequence[tuple[float, np.ndarray]] | tuple[np.ndarray, np.ndarray] = (),
    ctrl: Optional[tuple[np.ndarray, np.ndarray]] = None,
    p1: float = P1_DEFAULT,
    p2: float = P2_DEFAULT,
) -> QpProblem:
    """Stack CLF, CBF and control rows into a :class:`QpProblem`.

    ``cbf_rows`` is either a sequence of ``(phi0, phi1)`` pairs or a pair of
    stacked arrays ``(phi0[k], phi1[k, 2])``.
    """
    if p1 <= 0 or p2 <= 0:
        raise ValueError("relaxation weights must be positive")
    blocks, bounds = [], []
    n_clf = 0
    if clf is not None:
        psi0, psi1 = clf
        blocks.append(np.array([[psi1[0], psi1[1], -1.0, 0.0]]))
        bounds.append(np.array([-psi0]))
        n_clf = 1
    if isinstance(cbf_rows, tuple) and len(cbf_rows) == 2 and isinstance(cbf_rows[0], np.ndarray):
        phi0, phi1 = cbf_rows
    elif len(cbf_rows):
        phi0 = np.array([r[0] for r in cbf_rows], dtype=float)
        phi1 = np.array([r[1] for r in cbf_rows], dtype=float)
    else:
        phi0, phi1 = np.zeros(0), np.zeros((0, 2))
    k = phi0.shape[0]
    if k:
        rows = np.zeros((k, N_VARS))
        rows[:, :2] = phi1
        rows[:, 3] = -1.0
        blocks.append(rows)
        bounds.append(-phi0)
    n_ctrl = 0
    if ctrl is not None:
        M, rhs = ctrl
        rows = np.zeros((M.shape[0], N_VARS))
        rows[:, :2] = M
        blocks.append(rows)
        bounds.append(np.asarray(rhs, dtype=float))
        n_ctrl = M.shape[0]
    A = np.vstack(blocks) if blocks else np.zeros((0, N_VARS))
    u = np.concatenate(bounds) if bounds else np.zeros(0)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(u))):
        raise ValueError("non-finite constraint row")
    return QpProblem(
        P=2.0 * np.diag([1.0, 1.0, p1, p2]),
        q=np.zeros(N_VARS),
        A=A,
        u=u,
        n_clf=n_clf,
        n_cbf=k,
        n_ctrl=n_ctrl,
    )


def kkt_residuals(problem: QpProblem, x, y) -> dict:
    """Stationarity, primal feasibility and complementarity (all infinity norms)."""
    Ax = problem.A @ x
    slack = problem.u - Ax
    stat = problem.P @ x + problem.q + problem.A.T @ y
    return {
        "stationarity": float(np.max(np.abs(stat))) if stat.size else 0.0,
        "primal": float(np.max(np.maximum(-slack, 0.0), initial=0.0)),
        "dual": float(np.max(np.maximum(-y, 0.0), initial=0.0)),
        "complementarity": float(np.max(np.abs(y * slack), initial=0.0)),
    }


@dataclass
class AdmmSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_pinf: float = 1e-7
    max_iter: int = 4000
    check_every: int = 10
    adaptive_rho: bool = True
    adaptive_rho_tolerance: float = 5.0
    polish: bool = True
    polish_tol: float = 1e-9
    kkt_tol: float = 1e-6


class AdmmSolver:
    """Dense ADMM for ``min x'Px/2 + q'x  s.t.  A x <= u``.

    The instance keeps the last iterate so successive problems with the same
    number of rows can be warm started; :meth:`reset` discards it.
    """

    def __init__(self, settings: Optional[AdmmSettings] = None, warm_start: bool = False):
        self.settings = settings or AdmmSettings()
        self.warm_start = warm_start
        self._last = None

    def reset(self):
        self._last = None

    def solve(self, problem: QpProblem) -> QpSolution:
        st = self.settings
        n, m = N_VARS, problem.m
        P, q, A, u = problem.P, problem.q, problem.A, problem.u
        if m == 0:
            x = -np.linalg.solve(P, q)
            return QpSolution(x, np.zeros(0), Status.OPTIMAL, 0, True, kkt_residuals(problem, x, np.zeros(0)))

        # equilibrate: unit objective diagonal, unit row infinity norms
        D = 1.0 / np.sqrt(np.diag(P))
        Ps = P * np.outer(D, D)
        qs = q * D
        As = A * D
        E = 1.0 / np.maximum(np.max(np.abs(As), axis=1), 1e-12)
        As = As * E[:, None]
        us = u * E

        if self.warm_start and self._last is not None and self._last[2].shape[0] == m:
            x, z, y = (v.copy() for v in self._last)
            x = x / D
            y = y / E
            z = np.minimum(As @ x, us)
        else:
            x = np.zeros(n)
            z = np.minimum(As @ x, us)
            y = np.zeros(m)

        rho = st.rho
        sigma, alpha = st.sigma, st.alpha
        AtA_cache = As.T @ As
        Kinv = np.linalg.inv(Ps + sigma * np.eye(n) + rho * AtA_cache)
        AsT = As.T

        status = Status.MAX_ITER
        it = 0
        y_prev = y.copy()
        best = None
        for it in range(1, st.max_iter + 1):
            xt = Kinv @ (sigma * x - qs + AsT @ (rho * z - y))
            zt = As @ xt
            x = alpha * xt + (1.0 - alpha) * x
            zr = alpha * zt + (1.0 - alpha) * z
            z_new = np.minimum(zr + y / rho, us)
            y = y + rho * (zr - z_new)
            z = z_new

            if it % st.check_every:
                continue
            Ax = As @ x
            Px = Ps @ x
            Aty = AsT @ y
            # unscaled residuals
            r_prim = float(np.max(np.abs((Ax - z) / E)))
            r_dual = float(np.max(np.abs((Px + qs + Aty) / D)))
            eps_prim = st.eps_abs + st.eps_rel * max(np.max(np.abs(Ax / E)), np.max(np.abs(z / E)))
            eps_dual = st.eps_abs + st.eps_rel * max(
                np.max(np.abs(Px / D)), np.max(np.abs(Aty / D)), np.max(np.abs(q))
            )

            if st.polish:
                pol = self._polish(problem, x * D, y * E, z, us, y)
                if pol is not None:
                    best = pol
                    status = Status.OPTIMAL
                    break

            if r_prim <= eps_prim and r_dual <= eps_dual:
                status = Status.OPTIMAL
                break

            dy = y - y_prev
            ndy = float(np.max(np.abs(dy)))
            if ndy > 0 and np.max(np.abs(AsT @ dy)) <= st.eps_pinf * ndy:
                if float(us @ np.maximum(dy, 0.0)) < -st.eps_pinf * ndy:
                    status = Status.INFEASIBLE
                    break
            y_prev = y.copy()

            if st.adaptive_rho:
                num = r_prim / max(np.max(np.abs(Ax)), np.max(np.abs(z)), 1e-12)
                den = r_dual / max(np.max(np.abs(Px)), np.max(np.abs(Aty)), np.max(np.abs(qs)), 1e-12)
                if num > 0 and den > 0:
                    rho_new = float(np.clip(rho * np.sqrt(num / den), 1e-6, 1e6))
                    if rho_new > rho * st.adaptive_rho_tolerance or rho_new < rho / st.adaptive_rho_tolerance:
                        rho = rho_new
                        Kinv = np.linalg.inv(Ps + sigma * np.eye(n) + rho * AtA_cache)

        if best is not None:
            x_out, y_out = best
            polished = True
        else:
            x_out, y_out = x * D, y * E
            polished = False
            if status == Status.OPTIMAL and st.polish:
                pol = self._polish(problem, x_out, y_out, z, us, y, force=True)
                if pol is not None:
                    x_out, y_out = pol
                    polished = True
        if self.warm_start:
            self._last = (x_out.copy(), z.copy() / E, y_out.copy())
        kkt = kkt_residuals(problem, x_out, y_out)
        if status == Status.OPTIMAL and max(kkt.values()) >= st.kkt_tol:
            status = Status.MAX_ITER
        return QpSolution(x_out, y_out, status, it, polished, kkt)

    def _polish(self, problem, x, y, z_s, us, y_s, force=False):
        """Solve the equality-constrained QP on the guessed active set.

        Returns ``(x, y)`` when the candidate satisfies the KKT conditions to
        ``polish_tol`` (relative to the problem scale), else ``None``.
        """
        st = self.settings
        active = np.flatnonzero(us - z_s < y_s)
        if active.size > N_VARS:
            return None
        P, q, A, u = problem.P, problem.q, problem.A, problem.u
        Aa = A[active]
        k = active.size
        K = np.zeros((N_VARS + k, N_VARS + k))
        K[:N_VARS, :N_VARS] = P
        K[:N_VARS, N_VARS:] = Aa.T
        K[N_VARS:, :N_VARS] = Aa
        rhs = np.concatenate([-q, u[active]])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            return None
        xp = sol[:N_VARS]
        yp = np.zeros(problem.m)
        yp[active] = sol[N_VARS:]
        scale = max(1.0, float(np.max(np.abs(A), initial=0.0)), float(np.max(np.abs(u), initial=0.0)))
        tol = st.polish_tol * scale
        if np.any(yp < -tol):
            return None
        if np.any(A @ xp - u > tol):
            return None
        return xp, np.maximum(yp, 0.0)


def solve(problem: QpProblem, settings: Optional[AdmmSettings] = None) -> QpSolution:
    return AdmmSolver(settings).solve(problem)
