"""
Lyapunov certificate for the tracking error
===========================================

The error dynamics under the PD part of the control law are linear,
``de/dt = A e``.  A quadratic certificate ``V = e'Pe/2`` comes from the
Lyapunov equation ``A'P + PA = -Q``.
"""

import numpy as np

from balsa.clf import LyapunovCertificate, clf_row, lyapunov_residual

# default gains K_P = K_D = 4 give a double pole at -2 on each axis
cert = LyapunovCertificate.from_gains(4.0, 4.0)
print("eigenvalues of A:", np.round(np.linalg.eigvals(cert.A), 6))
print("P =\n", np.round(cert.P, 4))
print("residual:", lyapunov_residual(cert.A, cert.P, cert.Q))

# The CLF row is affine in the QP correction: psi0 + psi1 @ mu_qp <= d1.
# Noise adds a constant trace term to psi0.
e = np.array([0.5, -0.2, 0.1, 0.0])
for s in (0.0, 0.5, 1.0):
    psi0, psi1 = clf_row(e, cert, s * np.eye(2))
    print(f"sigma={s:.1f}  psi0={psi0:+.4f}  psi1={np.round(psi1, 4)}")
