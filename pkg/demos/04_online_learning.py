"""
Learning the model error online
===============================

Residual accelerations are regressed on state and the last control.  The
GP gives calibrated uncertainty near data and reverts to the prior far away.
"""

import numpy as np

from balsa.dynamics import step_sde, true_disturbance
from balsa.learning import GpHyper, RffConfig, blr_fit, gp_fit, make_sample

rng = np.random.default_rng(0)
samples = []
u_prev = np.zeros(2)
for k in range(300):
    v, th = rng.uniform(0.5, 2.5), rng.uniform(-np.pi, np.pi)
    z = np.array([0.0, 0.0, v * np.cos(th), v * np.sin(th)])
    u = rng.normal(size=2) * 0.5
    z1 = step_sde(z, u, 0.02, sigma=0.02 * np.eye(2), rng=rng)
    samples.append(make_sample(z, z1, u, 0.02, u_prev=u_prev))
    u_prev = u
X = np.array([s.x for s in samples])
Y = np.array([s.y for s in samples])

gp = gp_fit((X, Y), GpHyper(optimize=True))
blr = blr_fit((X, Y), RffConfig(n_features=200))
print("gp hyper:", gp.hyper.lengthscale, gp.hyper.noise)

probe = np.array([0.0, 0.0, 1.2, 0.4, 0.0, 0.0])
print("true   :", np.round(true_disturbance(probe[:4]), 3))
for name, b in (("gp", gp), ("blr", blr)):
    m, s = b.predict(probe)
    print(f"{name:6s} : {np.round(m, 3)}  std {np.round(s, 3)}")

far = np.array([0.0, 0.0, 8.0, 8.0, 3.0, 3.0])
print("far from data, gp std:", gp.predict(far)[1])
