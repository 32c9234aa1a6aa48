"""
Tracking a figure-eight with and without learning
=================================================

The plant carries an unmodelled drag-like disturbance.  After a 10 s warmup
the learner publishes a model every 40 samples and the controller cancels
the predicted error.  Shortened to 60 s here; the full scenario is 120 s.
"""

from balsa import presets
from balsa.harness import run, summarize

records = [run(presets.tracking(learner=name, duration=60.0)) for name in ("none", "gp")]
for r in records:
    err = r.column("e_norm")
    t = r.t
    print(f"{r.scenario.learner:5s} error 0-10 s {err[t < 10].mean():.3f}  "
          f"40-60 s {err[t >= 40].mean():.3f}  models published {int(r.column('model_index')[-1])}")
print()
print(summarize(records))
