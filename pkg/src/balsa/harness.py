"""Scenarios, reference trajectories, closed-loop runs and summaries."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml
from scipy.interpolate import CubicSpline

from balsa.cbf import Obstacle
from balsa.clf import LyapunovCertificate
from balsa.controller import BarrierSet, Controller, ControllerKind, ReferencePoint
from balsa.dynamics import ControlBox, step_sde, true_disturbance
from balsa.learning import (
    BLR_CAPACITY,
    GP_CAPACITY,
    INPUT_STATE_CONTROL,
    FixedBelief,
    GaussianBelief,
    GpHyper,
    ModelStore,
    OnlineLearner,
    RffConfig,
    SIGMA_FLOOR,
    blr_fit,
    gp_fit,
    make_sample,
)

TELEMETRY_COLUMNS = (
    "t", "z1", "z2", "z3", "z4", "xrm1", "xrm2", "xrm3", "xrm4",
    "e_norm", "V", "d1", "d2", "min_h", "u_c", "u_a", "sigma1", "sigma2",
    "model_index", "solver_status", "step_ms",
)

SUMMARY_COLUMNS = (
    "scenario", "controller", "learner", "seed", "mean_err_0_60", "mean_err_60_120",
    "std_err", "max_err", "min_h_overall", "pct_d2_pos", "p50_ms", "p99_ms",
)

LEARNERS = ("none", "gp", "blr", "exact")


# ---------------------------------------------------------------------------
# reference trajectories


@dataclass(frozen=True)
class FigureEight:
    """``x = a sin(wt)``, ``y = (b/2) sin(2wt)``; passes the crossing point at t=0."""

    period: float = 20.0
    a: float = 6.0
    b: float = 6.0
    center: tuple = (0.0, 0.0)

    def __call__(self, t: float) -> ReferencePoint:
        w = 2.0 * math.pi / self.period
        s, c = math.sin(w * t), math.cos(w * t)
        s2, c2 = math.sin(2 * w * t), math.cos(2 * w * t)
        hb = 0.5 * self.b
        x = np.array([
            self.center[0] + self.a * s,
            self.center[1] + hb * s2,
            self.a * w * c,
            hb * 2 * w * c2,
        ])
        acc = np.array([-self.a * w * w * s, -hb * 4 * w * w * s2])
        return ReferencePoint(x, acc)


@dataclass(frozen=True)
class WaypointSpline:
    """Cubic spline through waypoints, timed by chord length at a nominal speed.

    Open splines use natural end conditions (zero end acceleration) and are
    continued past the last waypoint at constant velocity, which keeps the
    trajectory C2.  Closed splines are periodic.
    """

    points: tuple
    speed: float = 1.0
    closed: bool = False

    def _spline(self):
        pts = np.asarray(self.points, dtype=float)
        if self.closed and not np.allclose(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        seg = np.hypot(*np.diff(pts, axis=0).T)
        t = np.concatenate([[0.0], np.cumsum(seg) / self.speed])
        return CubicSpline(t, pts, bc_type="periodic" if self.closed else "natural"), t[-1]

    def __call__(self, t: float) -> ReferencePoint:
        sp, T = _spline_cache(self)
        if self.closed:
            t = t % T
        elif t > T:
            p, v = sp(T), sp(T, 1)
            return ReferencePoint(np.concatenate([p + v * (t - T), v]), np.zeros(2))
        return ReferencePoint(np.concatenate([sp(t), sp(t, 1)]), np.asarray(sp(t, 2), dtype=float))


_SPLINES: dict = {}


def _spline_cache(ws: WaypointSpline):
    key = (ws.points, ws.speed, ws.closed)
    if key not in _SPLINES:
        _SPLINES[key] = ws._spline()
    return _SPLINES[key]


def make_reference(cfg: dict):
    cfg = dict(cfg)
    kind = cfg.pop("kind", "figure-eight")
    if kind == "figure-eight":
        if "center" in cfg:
            cfg["center"] = tuple(cfg["center"])
        return FigureEight(**cfg)
    if kind == "waypoint-spline":
        cfg["points"] = tuple(tuple(float(c) for c in p) for p in cfg["points"])
        return WaypointSpline(**cfg)
    raise ValueError(f"unknown reference kind {kind!r}")


def gen_reference(kind, t: float, **params) -> ReferencePoint:
    """Evaluate a reference given by kind name (or reference object) at time ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    ref = kind if callable(kind) else make_reference({"kind": kind, **params})
    return ref(t)


# ---------------------------------------------------------------------------
# scenario


@dataclass
class Scenario:
    name: str = "scenario"
    reference: dict = field(default_factory=lambda: {"kind": "figure-eight"})
    obstacles: list = field(default_factory=list)
    v_max: Optional[float] = None
    v_min: Optional[float] = None
    gamma_p: float = 1.0
    gamma: float = 1.0
    cull_radius: float = 10.0
    plant_sigma: float = 0.02
    disturbance: bool = True
    controller: str = "balsa"
    learner: str = "gp"
    input_mode: str = INPUT_STATE_CONTROL
    gp: dict = field(default_factory=dict)
    blr: dict = field(default_factory=dict)
    seed: int = 0
    dt: float = 0.02
    duration: float = 120.0
    retrain_every: int = 40
    warmup: float = 10.0
    publish_delay: int = 1
    threaded: bool = True
    kp: float = 4.0
    kd: float = 4.0
    epsilon: float = 1.0
    p1: float = 1.0
    p2: float = 100.0
    sigma0: float = 1.0
    robust_sigma: float = 2.0
    c_max: float = 2.5
    a_min: float = -4.0
    a_max: float = 4.0
    initial_offset: list = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    timing: bool = False

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        ControllerKind(self.controller)
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dump(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def barrier_set(self) -> BarrierSet:
        obs = [Obstacle(tuple(o["center"]), o["r"]) for o in self.obstacles]
        return BarrierSet.build(obs, self.v_max, self.v_min, self.gamma_p, self.gamma, self.cull_radius)


# ---------------------------------------------------------------------------
# runs


@dataclass
class RunRecord:
    scenario: Scenario
    data: np.ndarray
    status: list
    events: list = field(default_factory=list)
    d2_available: bool = True
    fit_seconds: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, TELEMETRY_COLUMNS.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def summary(self) -> dict:
        t = self.t
        err = self.column("e_norm")
        d2 = self.column("d2")
        step_ms = self.column("step_ms")
        first = err[t < 60.0]
        second = err[(t >= 60.0) & (t < 120.0)]
        d2v = d2[np.isfinite(d2)]
        ms = step_ms[np.isfinite(step_ms)]
        sc = self.scenario
        return {
            "scenario": sc.name,
            "controller": sc.controller,
            "learner": sc.learner,
            "seed": sc.seed,
            "mean_err_0_60": float(first.mean()) if first.size else float("nan"),
            "mean_err_60_120": float(second.mean()) if second.size else float("nan"),
            "std_err": float(err.std()),
            "max_err": float(err.max()),
            "min_h_overall": float(self.column("min_h").min()),
            "pct_d2_pos": float(100.0 * np.mean(d2v > 0)) if d2v.size else 0.0,
            "p50_ms": float(np.percentile(ms, 50)) if ms.size else float("nan"),
            "p99_ms": float(np.percentile(ms, 99)) if ms.size else float("nan"),
        }

    def telemetry_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TELEMETRY_COLUMNS)
        si = TELEMETRY_COLUMNS.index("solver_status")
        mi = TELEMETRY_COLUMNS.index("model_index")
        for row, status in zip(self.data, self.status):
            out = [repr(float(v)) for v in row]
            out[mi] = str(int(row[mi]))
            out[si] = status
            w.writerow(out)
        return buf.getvalue()

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{self.scenario.name}_{self.scenario.controller}_{self.scenario.learner}_s{self.scenario.seed}"
        path = out / f"{stem}.csv"
        path.write_text(self.telemetry_csv())
        (out / f"{stem}.yaml").write_text(yaml.safe_dump(self.scenario.to_dict(), sort_keys=False))
        if self.events:
            (out / f"{stem}.events.txt").write_text("\n".join(self.events) + "\n")
        return path


def _make_learner(sc: Scenario, store: ModelStore) -> Optional[OnlineLearner]:
    if sc.learner == "gp":
        hyper = GpHyper(**sc.gp)
        fit, cap = (lambda data: gp_fit(data, hyper)), GP_CAPACITY
    elif sc.learner == "blr":
        cfg = RffConfig(**sc.blr)
        fit, cap = (lambda data: blr_fit(data, cfg)), BLR_CAPACITY
    else:
        return None
    return OnlineLearner(
        fit, store, capacity=cap, retrain_every=sc.retrain_every,
        warmup=int(round(sc.warmup / sc.dt)), publish_delay=sc.publish_delay,
        threaded=sc.threaded,
    )


def run(sc: Scenario, references=None) -> RunRecord:
    """Closed-loop simulation of one scenario.

    Each step: publish a due model, read one belief snapshot, compute the
    control, step the plant, then append the resulting sample for training.
    """
    ref_fn = references or make_reference(sc.reference)
    rng = np.random.default_rng(sc.seed)
    cert = LyapunovCertificate.from_gains(sc.kp, sc.kd, epsilon=sc.epsilon)
    box = ControlBox(sc.c_max, sc.a_min, sc.a_max)
    controller = Controller(sc.controller, cert, box, sc.p1, sc.p2, sc.sigma0, sc.robust_sigma,
                            input_mode=sc.input_mode)
    disturbance = true_disturbance if sc.disturbance else None
    if sc.learner == "exact":
        dist = disturbance or (lambda z: np.zeros(2))
        initial = FixedBelief(mean_fn=lambda x: dist(x[:4]), fixed_sigma=SIGMA_FLOOR)
    else:
        initial = GaussianBelief(sigma0=sc.sigma0)
    store = ModelStore(initial)
    learner = _make_learner(sc, store)
    barriers = sc.barrier_set()
    sigma = sc.plant_sigma * np.eye(2)

    n = sc.steps
    data = np.full((n, len(TELEMETRY_COLUMNS)), np.nan)
    status: list = []
    events: list = []
    z = ref_fn(0.0).x + np.asarray(sc.initial_offset, dtype=float)
    u_prev = np.zeros(2)
    try:
        for k in range(n):
            t = k * sc.dt
            if learner is not None:
                learner.poll(k)
            belief = store.snapshot()
            ref = ref_fn(t)
            u, tel = controller.step(z, ref, belief, barriers)
            if tel.event:
                events.append(f"{t:.2f} {tel.event}")
            data[k, :9] = (t, *z, *ref.x)
            data[k, 9:18] = (tel.e_norm, tel.V, tel.d1, tel.d2, tel.min_h, u[0], u[1], tel.sigma[0], tel.sigma[1])
            data[k, 18] = tel.model_index
            data[k, 20] = tel.step_ms if sc.timing else np.nan
            status.append(tel.solver_status)
            z_next = step_sde(z, u, sc.dt, sigma, rng, disturbance=disturbance)
            if not np.all(np.isfinite(z_next)):
                events.append(f"{t:.2f} non_finite_state")
                data = data[: k + 1]
                break
            if learner is not None:
                learner.add(make_sample(z, z_next, u, sc.dt, u_prev=u_prev, t=t, mode=sc.input_mode), k)
            u_prev = u
            z = z_next
    finally:
        if learner is not None:
            learner.close()
    return RunRecord(sc, data, status, events, fit_seconds=list(learner.fit_seconds) if learner else [])


# ---------------------------------------------------------------------------
# summaries


def summarize(records: Sequence, path=None) -> str:
    """One CSV row per record (or per summary dict), with mean/std rows per group.

    Rows for individual runs carry their seed; aggregate rows use
    ``seed = "mean"`` and ``seed = "std"`` for every (scenario, controller,
    learner) group with more than one run.
    """
    rows = [r.summary() if isinstance(r, RunRecord) else dict(r) for r in records]
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["controller"], r["learner"]), []).append(r)
    out = list(rows)
    metrics = SUMMARY_COLUMNS[4:]
    for key, grp in groups.items():
        if len(grp) < 2:
            continue
        for label, fn in (("mean", np.mean), ("std", np.std)):
            agg = dict(zip(SUMMARY_COLUMNS[:3], key))
            agg["seed"] = label
            with np.errstate(invalid="ignore"):  # inf min_h without obstacles
                for m in metrics:
                    agg[m] = float(fn([g[m] for g in grp]))
            out.append(agg)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in out:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in SUMMARY_COLUMNS})
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def load_telemetry(path) -> dict:
    """Read a telemetry CSV back into column arrays (status stays as strings)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in body]
        cols[name] = vals if name == "solver_status" else np.array([float(v) for v in vals])
    return cols


def summary_from_telemetry(path, scenario: Optional[Scenario] = None) -> dict:
    cols = load_telemetry(path)
    sc = scenario
    if sc is None:
        side = Path(path).with_suffix(".yaml")
        sc = Scenario.load(side) if side.exists() else Scenario(name=Path(path).stem)
    data = np.column_stack([cols[c] if c != "solver_status" else np.zeros(len(cols["t"]))
                            for c in TELEMETRY_COLUMNS])
    return RunRecord(sc, data, cols["solver_status"]).summary()
