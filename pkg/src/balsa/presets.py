"""Named scenarios used by the demos, the CLI and the acceptance suite.

``tracking``
    Disturbed figure-eight with no barriers; learner on vs off is the main
    comparison.
``obstacles``
    Same loop with three circular obstacles on the left lobe, which the
    vehicle first reaches after the warmup has ended.
``velocity``
    Figure-eight whose peak reference speed is above ``v_max``.
``straight``
    Noiseless, undisturbed straight line for convergence checks.
"""

from __future__ import annotations

import numpy as np

from balsa.harness import Scenario, make_reference

FIGURE_EIGHT = {"kind": "figure-eight", "period": 24.0, "a": 6.0, "b": 6.0}

# times along the reference at which obstacles sit; all on the left lobe
OBSTACLE_TIMES = (14.0, 17.5, 21.0)
OBSTACLE_OFFSET = 0.4
OBSTACLE_RADIUS = 0.5


def obstacles_on_path(reference=FIGURE_EIGHT, times=OBSTACLE_TIMES,
                      offset=OBSTACLE_OFFSET, r=OBSTACLE_RADIUS) -> list:
    """Circles of radius ``r`` centred ``offset`` to the right of the path.

    With ``offset < r`` every circle covers the reference itself.
    """
    ref = make_reference(reference)
    out = []
    for t in times:
        x = ref(t).x
        v = x[2:] / np.linalg.norm(x[2:])
        p = x[:2] + offset * np.array([v[1], -v[0]])
        out.append({"center": [round(float(p[0]), 3), round(float(p[1]), 3)], "r": float(r)})
    return out


def tracking(**kw) -> Scenario:
    base = dict(name="tracking", reference=dict(FIGURE_EIGHT), duration=120.0,
                gp={"optimize": True})
    base.update(kw)
    return Scenario(**base)


def obstacles(**kw) -> Scenario:
    base = dict(name="obstacles", reference=dict(FIGURE_EIGHT), duration=30.0,
                obstacles=obstacles_on_path(), gamma_p=4.0, gamma=10.0,
                v_min=0.2, v_max=3.0, gp={"optimize": True})
    base.update(kw)
    return Scenario(**base)


def velocity(**kw) -> Scenario:
    base = dict(name="velocity", reference=dict(FIGURE_EIGHT), duration=60.0,
                v_max=2.0, gamma=10.0, gp={"optimize": True},
                initial_offset=[0.0, 0.0, -0.3, -0.3])
    base.update(kw)
    return Scenario(**base)


def straight(**kw) -> Scenario:
    base = dict(name="straight",
                reference={"kind": "waypoint-spline", "points": [[0.0, 0.0], [10.0, 0.0]], "speed": 1.0},
                duration=60.0, plant_sigma=0.0, disturbance=False, controller="balsa",
                learner="exact", initial_offset=[0.0, 0.5, 0.0, 0.0])
    base.update(kw)
    return Scenario(**base)


PRESETS = {"tracking": tracking, "obstacles": obstacles, "velocity": velocity, "straight": straight}


def get(name: str, **kw) -> Scenario:
    try:
        return PRESETS[name](**kw)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
