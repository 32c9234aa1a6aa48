"""Quadratic Lyapunov certificate for the tracking error and its CLF row."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from balsa.errors import NotHurwitz, SolveFailed

# G = [0; I] selects the velocity block of the 4-state error.
G = np.vstack([np.zeros((2, 2)), np.eye(2)])


def is_hurwitz(A: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0))


def build_A(K_P, K_D) -> np.ndarray:
    """Closed-loop error matrix ``[[0, I], [-K_P, -K_D]]`` of the PD loop."""
    K_P = np.atleast_2d(np.asarray(K_P, dtype=float))
    K_D = np.atleast_2d(np.asarray(K_D, dtype=float))
    n = K_P.shape[0]
    A = np.block([[np.zeros((n, n)), np.eye(n)], [-K_P, -K_D]])
    if not is_hurwitz(A):
        raise NotHurwitz(f"eigenvalues {np.linalg.eigvals(A)} not in the open left half-plane")
    return A


def solve_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve ``A.T @ P + P @ A = -Q`` through the Kronecker-vectorized system.

    For the 4x4 systems used here the 16x16 dense solve is both exact and
    cheap, and it avoids depending on a Schur-based solver.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if not is_hurwitz(A):
        raise NotHurwitz("Lyapunov equation needs a Hurwitz A for a unique SPD solution")
    n = A.shape[0]
    eye = np.eye(n)
    # row-major vec: vec(A.T P) = kron(A.T, I) vec(P), vec(P A) = kron(I, A.T) vec(P)
    M = np.kron(A.T, eye) + np.kron(eye, A.T)
    try:
        p = np.linalg.solve(M, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SolveFailed(str(exc)) from exc
    P = p.reshape(n, n)
    P = 0.5 * (P + P.T)
    if not np.all(np.isfinite(P)):
        raise SolveFailed("non-finite Lyapunov solution")
    return P


def lyapunov_residual(A, P, Q) -> float:
    return float(np.linalg.norm(A.T @ P + P @ A + Q, "fro"))


@dataclass(frozen=True)
class LyapunovCertificate:
    A: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    epsilon: float = 1.0

    @classmethod
    def from_gains(cls, K_P=4.0, K_D=4.0, Q=None, epsilon: float = 1.0) -> "LyapunovCertificate":
        """Build the certificate for scalar or 2x2 gains (scalars mean ``k * I``)."""
        K_P = np.asarray(K_P, dtype=float)
        K_D = np.asarray(K_D, dtype=float)
        if K_P.ndim == 0:
            K_P = float(K_P) * np.eye(2)
        if K_D.ndim == 0:
            K_D = float(K_D) * np.eye(2)
        A = build_A(K_P, K_D)
        Q = np.eye(4) if Q is None else np.asarray(Q, dtype=float)
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return cls(A=A, P=solve_lyapunov(A, Q), Q=Q, epsilon=float(epsilon))

    @property
    def K(self) -> np.ndarray:
        """PD gain ``[K_P K_D]`` recovered from the lower block row of ``A``."""
        return -self.A[2:, :]

    def V(self, e: np.ndarray) -> float:
        e = np.asarray(e, dtype=float)
        return 0.5 * float(e @ self.P @ e)

    def check(self, tol: float = 1e-10) -> None:
        if not is_hurwitz(self.A):
            raise NotHurwitz("A is not Hurwitz")
        if lyapunov_residual(self.A, self.P, self.Q) > tol * max(1.0, np.linalg.norm(self.Q)):
            raise SolveFailed("Lyapunov residual above tolerance")
        if not np.allclose(self.P, self.P.T) or np.linalg.eigvalsh(self.P).min() <= 0:
            raise SolveFailed("P is not symmetric positive definite")


def clf_row(e, cert: LyapunovCertificate, sigma) -> tuple[float, np.ndarray]:
    """Coefficients ``(psi0, psi1)`` of the CLF row ``psi0 + psi1 @ mu_qp <= d1``.

    ``psi0 = -e'Qe/2 + V(e)/epsilon + tr(G s s' G' P)/2`` and ``psi1 = e' P G``.
    Because ``G`` selects the velocity block, the trace reduces to
    ``tr(s s' P[2:, 2:])``.
    """
    e = np.asarray(e, dtype=float)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    Pe = cert.P @ e
    SS = sigma @ sigma.T
    psi0 = (
        -0.5 * float(e @ cert.Q @ e)
        + 0.5 * float(e @ Pe) / cert.epsilon
        + 0.5 * float(np.sum(SS * cert.P[2:, 2:]))
    )
    return psi0, Pe[2:].copy()
