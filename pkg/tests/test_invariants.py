"""Closed-loop properties of the velocity-barrier scenario."""

import numpy as np
import pytest

from balsa import presets
from balsa.harness import run


@pytest.fixture(scope="module")
def velocity_runs():
    sc = presets.velocity()
    out = {}
    for kind, learner in (("pd", "none"), ("ad", "gp"), ("qp", "none"), ("balsa", "gp")):
        out[kind] = run(sc.replace(controller=kind, learner=learner))
    return sc, out


def speed(rec):
    return np.hypot(rec.column("z3"), rec.column("z4"))


def test_velocity_barrier_respected(velocity_runs):
    sc, runs = velocity_runs
    assert speed(runs["balsa"]).max() <= sc.v_max + 0.05
    assert speed(runs["qp"]).max() <= sc.v_max + 0.05
    assert speed(runs["pd"]).max() > sc.v_max
    assert speed(runs["ad"]).max() > sc.v_max


def test_uncertainty_decreases(velocity_runs):
    sc, runs = velocity_runs
    rec = runs["balsa"]
    t, s = rec.t, rec.column("sigma1")
    first_pub = t[np.argmax(rec.column("model_index") > 0)]
    early = s[(t >= first_pub) & (t < first_pub + 20.0)].mean()
    late = s[t >= t[-1] - 20.0].mean()
    assert late < early


def test_learner_beats_no_learner_same_seed():
    sc = presets.tracking(duration=120.0, seed=11)
    gp = run(sc.replace(learner="gp")).summary()["mean_err_60_120"]
    none = run(sc.replace(learner="none")).summary()["mean_err_60_120"]
    assert gp < none
