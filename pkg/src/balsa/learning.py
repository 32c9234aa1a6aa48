"""Online learning of the model error with Gaussian beliefs.

Samples are finite-difference residuals of the velocity block against the
nominal model.  Two regressors produce a :class:`GaussianBelief`: an exact GP
per output dimension and Bayesian linear regression on random Fourier
features.  Beliefs are immutable; :class:`ModelStore` swaps them atomically
and counts publications (the switching index).
"""

from __future__ import annotations

import csv
import threading
import time
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from balsa.dynamics import plant_gain
from balsa.errors import IllConditioned

SIGMA_FLOOR = 1e-3
SIGMA_CAP = 1.0
SIGMA0 = 1.0
RETRAIN_EVERY = 40
GP_CAPACITY = 500
BLR_CAPACITY = 5000

INPUT_STATE = "state"
INPUT_STATE_CONTROL = "state+control"


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: np.ndarray
    t: float = 0.0


def learner_input(z, u_prev=None, mode: str = INPUT_STATE_CONTROL) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if mode == INPUT_STATE:
        return z.copy()
    if mode == INPUT_STATE_CONTROL:
        u_prev = np.zeros(2) if u_prev is None else np.asarray(u_prev, dtype=float)
        return np.concatenate([z, u_prev])
    raise ValueError(f"unknown learner input mode {mode!r}")


def make_sample(z_t, z_next, u_t, dt, f_hat=None, g=None, u_prev=None, t=0.0,
                mode: str = INPUT_STATE_CONTROL) -> Sample:
    """Residual ``(v(t+dt) - v(t))/dt - (f_hat(z) + g(z) u)`` with its learner input."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    z_t = np.asarray(z_t, dtype=float)
    z_next = np.asarray(z_next, dtype=float)
    gz = plant_gain(z_t) if g is None else (g(z_t) if callable(g) else np.asarray(g, dtype=float))
    nominal = gz @ np.asarray(u_t, dtype=float)
    if f_hat is not None:
        nominal = nominal + f_hat(z_t)
    y = (z_next[2:4] - z_t[2:4]) / dt - nominal
    return Sample(learner_input(z_t, u_prev, mode), y, float(t))


class Dataset:
    """Chronological ring buffer of samples; the oldest are evicted first."""

    def __init__(self, capacity: int = GP_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._buf: deque[Sample] = deque(maxlen=capacity)
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._buf)

    def append(self, sample: Sample):
        with self._lock:
            self._buf.append(sample)

    def extend(self, samples: Iterable[Sample]):
        for s in samples:
            self.append(s)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Frozen copy ``(X, Y, t)`` safe to hand to a trainer thread."""
        with self._lock:
            samples = list(self._buf)
        if not samples:
            return np.zeros((0, 0)), np.zeros((0, 2)), np.zeros(0)
        X = np.array([s.x for s in samples])
        Y = np.array([s.y for s in samples])
        t = np.array([s.t for s in samples])
        return X, Y, t

    def to_csv(self, path):
        X, Y, t = self.arrays()
        d = X.shape[1] if X.size else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(d)] + ["y1", "y2"])
            for ti, xi, yi in zip(t, X, Y):
                w.writerow([repr(float(ti))] + [repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])

    @classmethod
    def from_csv(cls, path, capacity: Optional[int] = None) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        nx = len(header) - 3
        ds = cls(capacity or max(len(body), 1))
        for r in body:
            vals = [float(v) for v in r]
            ds.append(Sample(np.array(vals[1:1 + nx]), np.array(vals[1 + nx:]), vals[0]))
        return ds


# ---------------------------------------------------------------------------
# beliefs


def _clip_sigma(std: np.ndarray, floor: float, cap: float) -> np.ndarray:
    return np.clip(std, floor, cap)


@dataclass(frozen=True)
class GaussianBelief:
    """Prior belief: zero mean and ``sigma0 * I`` everywhere (switching index 0)."""

    index: int = 0
    sigma0: float = SIGMA0
    sigma_floor: float = SIGMA_FLOOR
    sigma_cap: float = SIGMA_CAP

    def predict(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Return mean (2,) and per-axis standard deviation (2,) at input ``x``."""
        return np.zeros(2), np.full(2, _clip_sigma(self.sigma0, self.sigma_floor, max(self.sigma_cap, self.sigma0)))

    def mean(self, x) -> np.ndarray:
        return self.predict(x)[0]

    def sigma(self, x) -> np.ndarray:
        """Diffusion-style diagonal matrix ``diag(std)``."""
        return np.diag(self.predict(x)[1])


@dataclass(frozen=True)
class FixedBelief(GaussianBelief):
    """Constant ``(mean_fn, sigma)`` belief, used for robust and exact-model variants."""

    mean_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fixed_sigma: float = SIGMA0

    def predict(self, x):
        m = np.zeros(2) if self.mean_fn is None else np.asarray(self.mean_fn(x), dtype=float)
        return m, np.full(2, self.fixed_sigma)


@dataclass(frozen=True)
class _Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 1e-8, sd, 1.0)
        return cls(mu, sd)

    def __call__(self, X):
        return (X - self.mean) / self.scale


@dataclass(frozen=True)
class GpHyper:
    lengthscale: float = 1.0
    signal: float = 1.0
    noise: float = 0.1
    optimize: bool = False
    lengthscale_grid: tuple = (0.3, 0.5, 1.0, 2.0, 4.0)
    noise_grid: tuple = (0.03, 0.1, 0.3, 1.0)


def se_kernel(X1, X2, lengthscale: float, signal: float) -> np.ndarray:
    d2 = (
        np.sum(X1**2, axis=1)[:, None]
        + np.sum(X2**2, axis=1)[None, :]
        - 2.0 * X1 @ X2.T
    )
    return signal**2 * np.exp(-0.5 * np.maximum(d2, 0.0) / lengthscale**2)


def _chol_with_jitter(K, base: float):
    jitter = 0.0
    for _ in range(8):
        try:
            return cho_factor(K + jitter * np.eye(K.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            jitter = base if jitter == 0.0 else jitter * 10.0
    raise IllConditioned("Gram matrix not positive definite after jitter escalation")


@dataclass(frozen=True)
class GpBelief(GaussianBelief):
    X: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    L: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    standardizer: Optional[_Standardizer] = None
    hyper: GpHyper = GpHyper()

    def predict(self, x):
        xs = self.standardizer(np.atleast_2d(np.asarray(x, dtype=float)))
        k = se_kernel(self.X, xs, self.hyper.lengthscale, self.hyper.signal)[:, 0]
        m = k @ self.alpha
        v = solve_triangular(self.L, k, lower=True, check_finite=False)
        var = max(self.hyper.signal**2 - float(v @ v), 0.0)
        std = np.full(2, np.sqrt(var))
        return m, _clip_sigma(std, self.sigma_floor, self.sigma_cap)

    def latent_variance(self, x) -> float:
        xs = self.standardizer(np.atleast_2d(np.asarray(x, dtype=float)))
        k = se_kernel(self.X, xs, self.hyper.lengthscale, self.hyper.signal)[:, 0]
        v = solve_triangular(self.L, k, lower=True, check_finite=False)
        return self.hyper.signal**2 - float(v @ v)


def _gp_log_marginal(Xs, Y, ell, signal, noise) -> float:
    K = se_kernel(Xs, Xs, ell, signal) + noise**2 * np.eye(Xs.shape[0])
    try:
        c = cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    a = cho_solve(c, Y)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    n = Xs.shape[0]
    return float(-0.5 * np.sum(Y * a) - Y.shape[1] * (0.5 * logdet + 0.5 * n * np.log(2 * np.pi)))


def _as_arrays(data):
    if isinstance(data, Dataset):
        X, Y, _ = data.arrays()
    else:
        X, Y = data[0], data[1]
    return np.asarray(X, dtype=float), np.asarray(Y, dtype=float)


def gp_fit(data, hyper: GpHyper = GpHyper(), sigma_floor=SIGMA_FLOOR, sigma_cap=SIGMA_CAP) -> GpBelief:
    """Exact GP regression, one independent output per target dimension.

    Both outputs share the squared-exponential kernel on z-scored inputs, so a
    single Cholesky factor serves the pair.  The returned belief reports the
    latent posterior standard deviation, floored and capped.
    """
    X, Y = _as_arrays(data)
    if X.shape[0] < 1:
        raise ValueError("gp_fit needs at least one sample")
    std = _Standardizer.fit(X)
    Xs = std(X)
    if hyper.optimize:
        best = max(
            ((ell, nz) for ell in hyper.lengthscale_grid for nz in hyper.noise_grid),
            key=lambda p: _gp_log_marginal(Xs, Y, p[0], hyper.signal, p[1]),
        )
        hyper = replace(hyper, lengthscale=best[0], noise=best[1])
    K = se_kernel(Xs, Xs, hyper.lengthscale, hyper.signal) + hyper.noise**2 * np.eye(X.shape[0])
    c = _chol_with_jitter(K, 1e-10 * hyper.signal**2)
    alpha = cho_solve(c, Y, check_finite=False)
    L = np.tril(c[0])
    return GpBelief(
        sigma_floor=sigma_floor, sigma_cap=sigma_cap,
        X=Xs, alpha=alpha, L=L, standardizer=std, hyper=hyper,
    )


@dataclass(frozen=True)
class RffConfig:
    n_features: int = 200
    lengthscale: float = 1.0
    signal: float = 1.0
    prior_precision: float = 1.0
    noise: float = 0.1
    seed: int = 0


def rff_features(Xs, W, b, signal) -> np.ndarray:
    F = W.shape[0]
    return signal * np.sqrt(2.0 / F) * np.cos(Xs @ W.T + b)


@dataclass(frozen=True)
class BlrBelief(GaussianBelief):
    W: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w_mean: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    S: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    standardizer: Optional[_Standardizer] = None
    config: RffConfig = RffConfig()

    def features(self, x) -> np.ndarray:
        xs = self.standardizer(np.atleast_2d(np.asarray(x, dtype=float)))
        return rff_features(xs, self.W, self.b, self.config.signal)

    def variance(self, x) -> float:
        phi = self.features(x)[0]
        return float(phi @ self.S @ phi) + self.config.noise**2

    def predict(self, x):
        phi = self.features(x)[0]
        m = phi @ self.w_mean
        var = float(phi @ self.S @ phi) + self.config.noise**2
        return m, _clip_sigma(np.full(2, np.sqrt(var)), self.sigma_floor, self.sigma_cap)


def blr_fit(data, config: RffConfig = RffConfig(), sigma_floor=SIGMA_FLOOR, sigma_cap=SIGMA_CAP) -> BlrBelief:
    """Bayesian linear regression on random Fourier features of z-scored inputs.

    Prior ``w ~ N(0, I/lambda)`` per output; the posterior covariance ``S`` is
    shared by both outputs and the predictive variance is ``phi'S phi + noise^2``.
    """
    X, Y = _as_arrays(data)
    if X.shape[0] < 1:
        raise ValueError("blr_fit needs at least one sample")
    std = _Standardizer.fit(X)
    rng = np.random.default_rng(config.seed)
    W = rng.standard_normal((config.n_features, X.shape[1])) / config.lengthscale
    b = rng.uniform(0.0, 2.0 * np.pi, config.n_features)
    Phi = rff_features(std(X), W, b, config.signal)
    beta = 1.0 / config.noise**2
    Aprec = config.prior_precision * np.eye(config.n_features) + beta * Phi.T @ Phi
    c = cho_factor(Aprec, lower=True)
    S = cho_solve(c, np.eye(config.n_features))
    w_mean = beta * cho_solve(c, Phi.T @ Y)
    return BlrBelief(
        sigma_floor=sigma_floor, sigma_cap=sigma_cap,
        W=W, b=b, w_mean=w_mean, S=0.5 * (S + S.T), standardizer=std, config=config,
    )


def calibration(belief: GaussianBelief, X, Y, k: float = 2.0) -> float:
    """Fraction of residual components lying within ``k`` predicted std."""
    hits = 0
    for x, y in zip(X, Y):
        m, s = belief.predict(x)
        hits += int(np.sum(np.abs(y - m) <= k * s))
    return hits / max(2 * len(X), 1)


# ---------------------------------------------------------------------------
# publication


class ModelStore:
    """Holds the controller-visible belief; publication is a single swap."""

    def __init__(self, initial: Optional[GaussianBelief] = None):
        self._belief = initial if initial is not None else GaussianBelief()
        self._lock = threading.Lock()

    def snapshot(self) -> GaussianBelief:
        return self._belief

    @property
    def index(self) -> int:
        return self._belief.index

    def publish(self, belief: GaussianBelief) -> GaussianBelief:
        with self._lock:
            new = replace(belief, index=self._belief.index + 1)
            self._belief = new
        return new


class OnlineLearner:
    """Dataset accumulation plus background retraining on a fixed cadence.

    The first fit is submitted once ``warmup`` samples are collected and then
    after every ``retrain_every`` new samples.  A submitted fit trains on a
    frozen copy of the dataset in a worker thread and is published by
    :meth:`poll` exactly ``publish_delay`` steps later (waiting for the worker
    if needed), so runs stay reproducible while training overlaps control.
    """

    def __init__(
        self,
        fit: Callable[[tuple[np.ndarray, np.ndarray]], GaussianBelief],
        store: ModelStore,
        capacity: int = GP_CAPACITY,
        retrain_every: int = RETRAIN_EVERY,
        warmup: int = 500,
        publish_delay: int = 1,
        threaded: bool = True,
    ):
        self.fit = fit
        self.store = store
        self.dataset = Dataset(capacity)
        self.retrain_every = retrain_every
        self.warmup = warmup
        self.publish_delay = publish_delay
        self._executor = ThreadPoolExecutor(max_workers=1) if threaded else None
        self._pending: Optional[tuple[Future, int]] = None
        self._since_submit = 0
        self._total = 0
        self.submitted = 0
        self.fit_seconds: list[float] = []

    def _train(self, X, Y):
        t0 = time.perf_counter()
        belief = self.fit((X, Y))
        self.fit_seconds.append(time.perf_counter() - t0)
        return belief

    def add(self, sample: Sample, step: int):
        self.dataset.append(sample)
        self._total += 1
        self._since_submit += 1
        if self._pending is not None:
            return
        first = self.submitted == 0
        if (first and self._total >= self.warmup) or (not first and self._since_submit >= self.retrain_every):
            X, Y, _ = self.dataset.arrays()
            if self._executor is None:
                fut: Future = Future()
                fut.set_result(self._train(X, Y))
            else:
                fut = self._executor.submit(self._train, X, Y)
            self._pending = (fut, step + self.publish_delay)
            self._since_submit = 0
            self.submitted += 1

    def poll(self, step: int) -> bool:
        """Publish a finished fit when it is due; returns True on publication."""
        if self._pending is None or step < self._pending[1]:
            return False
        fut, _ = self._pending
        self._pending = None
        self.store.publish(fut.result())
        return True

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
