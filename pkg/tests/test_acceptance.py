"""Acceptance suite: one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py -s``; the lines are printed
as each criterion finishes and again as a block at the end of the module.
The obstacle rollouts (100 per controller) are shared by criteria 2, 3 and 5
and dominate the runtime (roughly ten minutes on one core).
"""

import time

import numpy as np
import pytest

from balsa import presets
from balsa.cbf import barrier_derivatives, barrier_value
from balsa.clf import lyapunov_residual, solve_lyapunov
from balsa.harness import run
from balsa.learning import GpHyper, gp_fit
from balsa.qp import Status, kkt_residuals, solve
from oracles import fd_gradient, fd_jacobian, qp_enumerate
from test_cbf import rel, safe_states
from test_clf import random_hurwitz
from test_qp import random_problem

N_ROLLOUTS = 100
H_TOL = -0.02
LINES: dict = {}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES[n] = line
    print("\n" + line)
    return ok


@pytest.fixture(scope="module", autouse=True)
def summary_block():
    yield
    print("\n\nacceptance summary")
    for n in sorted(LINES):
        print("  " + LINES[n])


def start_offset(seed):
    """Seeded initial perturbation; the start stays well inside the safe set."""
    g = np.random.default_rng(10_000 + seed)
    return [float(v) for v in np.r_[g.uniform(-0.3, 0.3, 2), g.uniform(-0.2, 0.2, 2)]]


@pytest.fixture(scope="module")
def obstacle_rollouts():
    out = {}
    for kind, learner in (("balsa", "gp"), ("rob", "none")):
        recs = []
        for s in range(N_ROLLOUTS):
            r = run(presets.obstacles(controller=kind, learner=learner, seed=s,
                                      initial_offset=start_offset(s)))
            recs.append({"min_h": float(r.column("min_h").min()),
                         "min_h_trace": r.column("min_h"),
                         "err": float(r.column("e_norm").mean())})
        out[kind] = recs
    return out


def test_criterion_1_learning_benefit():
    ratios, secs, improved = [], [], []
    for seed in range(5):
        t0 = time.perf_counter()
        gp = run(presets.tracking(learner="gp", seed=seed)).summary()
        secs.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        none = run(presets.tracking(learner="none", seed=seed)).summary()
        secs.append(time.perf_counter() - t0)
        ratios.append(gp["mean_err_60_120"] / none["mean_err_60_120"])
        improved.append(gp["mean_err_60_120"] < gp["mean_err_0_60"])
    ok = max(ratios) <= 0.35 and max(secs) <= 120.0 and all(improved)
    assert report(1, ok, f"minute-2 gp/none ratio max {max(ratios):.3f} (<= 0.35) over 5 seeds, "
                         f"slowest run {max(secs):.1f} s (<= 120 s), gp minute-2 < minute-1 in {sum(improved)}/5")


def test_criterion_2_safety_ordering(obstacle_rollouts):
    unsafe = {}
    for kind, learner in (("pd", "none"), ("ad", "gp")):
        r = run(presets.obstacles(controller=kind, learner=learner, seed=0, initial_offset=start_offset(0)))
        unsafe[kind] = float(r.column("min_h").min())
    safe = {k: min(r["min_h"] for r in v) for k, v in obstacle_rollouts.items()}
    ok = unsafe["pd"] < 0 and unsafe["ad"] < 0 and min(safe.values()) >= H_TOL
    assert report(2, ok, f"min h pd {unsafe['pd']:.3f}, ad {unsafe['ad']:.3f} (< 0); "
                         f"over {N_ROLLOUTS} rollouts balsa {safe['balsa']:.4f}, rob {safe['rob']:.4f} (>= {H_TOL})")


def test_criterion_3_conservatism(obstacle_rollouts):
    e_b = np.mean([r["err"] for r in obstacle_rollouts["balsa"]])
    e_r = np.mean([r["err"] for r in obstacle_rollouts["rob"]])
    ok = e_r >= 1.2 * e_b
    assert report(3, ok, f"mean tracking error rob {e_r:.3f} vs balsa {e_b:.3f}, ratio {e_r / e_b:.2f} (>= 1.2)")


def test_criterion_4_lyapunov_decrease():
    sc = presets.straight()
    sc = sc.replace(duration=sc.duration + sc.dt)  # last row at t = 60 s
    r = run(sc)
    dV = np.diff(r.column("V"))
    e60 = float(r.column("e_norm")[-1])
    t_last = float(r.t[-1])
    ok = dV.max() <= 1e-6 and e60 < 1e-3 and abs(t_last - 60.0) < 1e-9
    assert report(4, ok, f"max per-step V increase {dV.max():.2e} (<= 1e-6), |e(60 s)| {e60:.2e} m (< 1e-3)")


def test_criterion_5_discrete_invariance(obstacle_rollouts):
    recs = obstacle_rollouts["balsa"]
    kept = sum(bool(np.all(r["min_h_trace"] >= H_TOL)) for r in recs)
    ok = kept == N_ROLLOUTS
    assert report(5, ok, f"balsa rollouts with h >= {H_TOL} at every step: {kept}/{N_ROLLOUTS}")


def test_criterion_6_numerical_kernels():
    rng = np.random.default_rng(6)
    lyap = 0.0
    for _ in range(100):
        A = random_hurwitz(rng)
        Q = rng.normal(size=(4, 4))
        Q = Q @ Q.T + np.eye(4)
        lyap = max(lyap, lyapunov_residual(A, solve_lyapunov(A, Q), Q))

    g_err = h_err = 0.0
    for z, spec in safe_states(rng, 1000):
        _, dB, d2B, _ = barrier_derivatives(z, spec)
        g_err = max(g_err, rel(dB, fd_gradient(lambda x: barrier_value(x, spec), z)))
        h_err = max(h_err, rel(d2B, fd_jacobian(lambda x: barrier_derivatives(x, spec)[1], z)))

    hyper = GpHyper(lengthscale=1.1, signal=0.9, noise=0.15)
    gp_err = 0.0
    for _ in range(5):
        X, Y = rng.normal(size=(50, 6)), rng.normal(size=(50, 2))
        b = gp_fit((X, Y), hyper)
        Xs = (X - X.mean(0)) / X.std(0)
        K = hyper.signal**2 * np.exp(-0.5 * ((Xs[:, None] - Xs[None]) ** 2).sum(-1) / hyper.lengthscale**2)
        Kinv = np.linalg.inv(K + hyper.noise**2 * np.eye(50))
        for xt in rng.normal(size=(10, 6)):
            xs = (xt - X.mean(0)) / X.std(0)
            ks = hyper.signal**2 * np.exp(-0.5 * ((Xs - xs) ** 2).sum(-1) / hyper.lengthscale**2)
            gp_err = max(gp_err, np.abs(b.mean(xt) - ks @ Kinv @ Y).max(),
                         abs(b.latent_variance(xt) - (hyper.signal**2 - ks @ Kinv @ ks)))

    qp_obj = qp_kkt = 0.0
    qp_ok = True
    for _ in range(1000):
        prob = random_problem(rng)
        x_ref, _ = qp_enumerate(prob.P, prob.q, prob.A, prob.u)
        sol = solve(prob)
        qp_ok &= sol.status == Status.OPTIMAL
        f_ref = prob.objective(x_ref)
        qp_obj = max(qp_obj, abs(prob.objective(sol.x) - f_ref) / max(abs(f_ref), 1e-8))
        qp_kkt = max(qp_kkt, max(kkt_residuals(prob, sol.x, sol.y).values()))

    ok = lyap < 1e-10 and g_err < 1e-5 and h_err < 1e-4 and gp_err < 1e-8 and qp_obj < 1e-6 and qp_kkt < 1e-6 and qp_ok
    assert report(6, ok, f"lyapunov residual {lyap:.1e}; dB rel {g_err:.1e}, d2B rel {h_err:.1e}; "
                         f"gp vs dense {gp_err:.1e}; qp objective rel {qp_obj:.1e}, kkt {qp_kkt:.1e}")


def test_criterion_7_latency():
    ang = np.linspace(0.0, 2 * np.pi, 100, endpoint=False)
    ring = [{"center": [float(12 * np.cos(a)), float(12 * np.sin(a))], "r": 0.3} for a in ang]
    sc = presets.tracking(name="latency", obstacles=ring, cull_radius=1e3, duration=30.0, timing=True)
    r = run(sc)
    ms = r.column("step_ms")
    p50, p99 = np.percentile(ms, 50), np.percentile(ms, 99)
    ok = p50 < 4.0 and p99 < 10.0 and r.column("model_index")[-1] > 0
    assert report(7, ok, f"full control step with 100 barriers and a learned GP: median {p50:.2f} ms (< 4), "
                         f"p99 {p99:.2f} ms (< 10)")


def test_criterion_8_determinism(tmp_path):
    sc = presets.obstacles(controller="balsa", learner="gp", seed=3, duration=15.0)
    a = run(sc).write(tmp_path / "a").read_bytes()
    b = run(sc).write(tmp_path / "b").read_bytes()
    ok = a == b and len(a) > 0
    assert report(8, ok, f"two runs of the same scenario and seed: telemetry CSV byte-identical = {a == b} "
                         f"({len(a)} bytes)")
