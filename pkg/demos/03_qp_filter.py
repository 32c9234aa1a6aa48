"""
The CLF-CBF quadratic program
=============================

Decision vector ``(mu1, mu2, d1, d2)``: the correction to the nominal
pseudo-control plus two relaxations.  The dense ADMM solver handles the
handful of rows produced each control step.
"""

import numpy as np

from balsa.dynamics import ControlBox
from balsa.qp import assemble, control_rows, kkt_residuals, solve

# one CLF row that wants mu1 <= -1.5, and one barrier row pushing the other way
clf = (3.0, np.array([1.0, 0.0]))
cbf = [(-0.5, np.array([-1.0, 0.0]))]
z = np.array([0.0, 0.0, 1.0, 0.0])
ctrl = control_rows(z, mu_d=np.zeros(2), box=ControlBox())

prob = assemble(clf, cbf, ctrl, p1=1.0, p2=100.0)
print(prob.dump())
sol = solve(prob)
print("status:", sol.status.value, "iterations:", sol.iterations)
print("mu =", np.round(sol.mu, 6), " d1 =", round(sol.d1, 6), " d2 =", round(sol.d2, 6))
print("kkt:", {k: f"{v:.1e}" for k, v in kkt_residuals(prob, sol.x, sol.y).items()})
