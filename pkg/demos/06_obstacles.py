"""
Obstacles on the path
=====================

Three obstacles sit on the left lobe of the figure-eight.  The PD and
adaptive controllers drive through them; the QP-filtered controllers go
around.  The robust variant assumes a large fixed uncertainty and pays for
it in tracking error.
"""

from balsa import presets
from balsa.harness import run

for kind, learner in (("pd", "none"), ("ad", "gp"), ("qp", "none"), ("rob", "none"), ("balsa", "gp")):
    r = run(presets.obstacles(controller=kind, learner=learner))
    print(f"{kind:5s} mean error {r.column('e_norm').mean():.3f} m   min h {r.column('min_h').min():+.3f} m"
          f"   events {len(r.events)}")
