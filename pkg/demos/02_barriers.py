"""
Reciprocal barriers around an obstacle
======================================

``B = 1/s`` with ``s = gamma_p * h + dh/dt`` blows up as the vehicle
approaches the obstacle boundary too fast.  The CBF row bounds how fast
``B`` may grow.
"""

import numpy as np

from balsa.cbf import BarrierSpec, barrier_value, cbf_row
from balsa.errors import OutsideSafeSet

spec = BarrierSpec.for_obstacle(center=(4.0, 0.0), r=1.0, gamma_p=2.0, gamma=5.0)

# drive straight at the obstacle at 1.5 m/s and watch B and the row
for x in (0.0, 1.0, 1.8, 2.2):
    z = np.array([x, 0.0, 1.5, 0.0])
    try:
        B = barrier_value(z, spec)
    except OutsideSafeSet as exc:
        print(f"x={x:.1f}  outside: {exc}")
        continue
    phi0, phi1 = cbf_row(z, spec, mu_d=np.zeros(2), sigma=0.2 * np.eye(2))
    print(f"x={x:.1f}  B={B:7.3f}  phi0={phi0:+8.3f}  phi1={np.round(phi1, 3)}")

# Velocity limits use the same machinery on speed.
vmax = BarrierSpec.v_max(2.0, gamma=10.0)
print("B at 1.9 m/s:", barrier_value(np.array([0, 0, 1.9, 0.0]), vmax))
