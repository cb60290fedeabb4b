"""Ensembles of killed replicas and the statistics drawn from them.

Conditioned laws are estimated naively: replicas killed before a
checkpoint are dropped and the survivors taken as a sample from
``P_x(X_t in . | tau > t)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .dynamics import SchemeConfig, grid_index
from .errors import ConfigurationError, EmptySampleError, WindowError
from .killing import BatchResult, refined_times, run_killed_batch
from .model import DriftSpec, KillingSpec, TargetSpec

DEFAULT_CHUNK = 1 << 17


@dataclass(frozen=True)
class ModelBundle:
    """Everything a killed simulation needs; ``drift_at`` defaults to ``grad A``."""

    target: TargetSpec
    drift: DriftSpec
    killing: KillingSpec
    drift_at: Callable | None = None

    @property
    def dim(self) -> int:
        return self.target.dim

    @property
    def step_drift(self) -> Callable:
        return self.drift_at if self.drift_at is not None else self.drift.drift_at


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble run settings.

    ``x0`` is either a point or an initial sampler: ``"target"`` (exact
    draws from a Gaussian target) or ``{"sampler": "normal", "mean": m,
    "var": v}``.
    """

    replicas: int
    horizon: float
    checkpoints: Sequence[float]
    dt: float = 0.01
    seed: int = 0
    x0: object = 0.0
    scheme: str = "euler"
    bridge_levels: int = 0
    workers: int = 1
    chunk_size: int = DEFAULT_CHUNK
    bins: object = "fd"
    substreams: Sequence[int] | None = None

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigurationError("replicas must be positive")
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")
        cps = list(self.checkpoints)
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigurationError("checkpoints must be increasing")
        for t in cps:
            if t < 0 or t > self.horizon + 1e-12:
                raise ConfigurationError(f"checkpoint {t} outside [0, horizon]")
            k = round(t / self.dt)
            if abs(k * self.dt - t) > 1e-12 * max(1.0, t) and abs(t - self.horizon) > 1e-12:
                raise ConfigurationError(f"checkpoint {t} is not a multiple of dt={self.dt}")
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigurationError("workers and chunk_size must be positive")
        if self.substreams is not None and len(self.substreams) != self.replicas:
            raise ConfigurationError("substreams must list one index per replica")

    @property
    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(self.dt, self.scheme, self.bridge_levels)


@dataclass
class ConditionalLaw:
    t: float
    survivor_states: np.ndarray
    n_survivors: int
    bin_edges: np.ndarray
    counts: np.ndarray

    @property
    def empty(self) -> bool:
        return self.n_survivors == 0

    @property
    def density(self) -> np.ndarray:
        widths = np.diff(self.bin_edges)
        if self.n_survivors == 0:
            return np.zeros_like(widths)
        return self.counts / (self.n_survivors * widths)


@dataclass
class SurvivalCurve:
    times: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    replicas: int


@dataclass
class RateFit:
    window: tuple[float, float]
    slope: float
    intercept: float
    r_squared: float
    n_points: int


@dataclass
class Summary:
    n: int
    mean: np.ndarray
    var: np.ndarray
    se_mean: np.ndarray
    se_var: np.ndarray


@dataclass
class EnsembleResult:
    laws: list[ConditionalLaw]
    survival: SurvivalCurve
    trace_times: np.ndarray
    trace_mean: np.ndarray  # survivor mean per grid time, (n_times, d)
    trace_var: np.ndarray
    taus: np.ndarray = field(repr=False, default=None)

    def law_at(self, t: float) -> ConditionalLaw:
        for law in self.laws:
            if abs(law.t - t) <= 1e-9 * max(1.0, t):
                return law
        raise KeyError(t)


# ---------------------------------------------------------------------------
# statistics


def ks_statistic(samples, reference_cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov distance ``sup |F_n - F|``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise EmptySampleError("KS statistic of an empty sample")
    f = np.asarray(reference_cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def fit_exp_rate(times, values, window: tuple[float, float]) -> RateFit:
    """Least-squares line through ``log(values)`` against time inside ``window``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if sel.sum() < 3:
        raise WindowError(f"window {window} holds {int(sel.sum())} points, need at least 3")
    if np.any(~(v[sel] > 0)):
        raise WindowError(f"non-positive values inside window {window}")
    ts, ys = t[sel], np.log(v[sel])
    slope, intercept = np.polyfit(ts, ys, 1)
    resid = ys - (slope * ts + intercept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit((float(lo), float(hi)), float(slope), float(intercept), r2, int(sel.sum()))


def summarize(law) -> Summary:
    """Mean and unbiased variance per coordinate with jackknife standard errors.

    The leave-one-out variances are computed in closed form, so the cost
    is linear in the number of survivors.
    """
    x = law.survivor_states if isinstance(law, ConditionalLaw) else np.asarray(law, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if n < 2:
        raise EmptySampleError(f"need at least 2 survivors, got {n}")
    mean = x.mean(axis=0)
    dev = x - mean
    q = np.sum(dev**2, axis=0)
    var = q / (n - 1)
    se_mean = np.sqrt(var / n)
    if n >= 3:
        loo = (q - n / (n - 1) * dev**2) / (n - 2)
        se_var = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    else:
        se_var = np.full_like(var, np.nan)
    return Summary(n, mean, var, se_mean, se_var)


def histogram(states: np.ndarray, bins="fd") -> tuple[np.ndarray, np.ndarray]:
    """Histogram of the first coordinate (Freedman-Diaconis bins by default)."""
    x = np.asarray(states, dtype=float).reshape(len(states), -1)[:, 0] if len(states) else np.empty(0)
    if x.size == 0:
        return np.array([0.0, 1.0]), np.zeros(1, dtype=np.int64)
    if x.size < 2 or np.ptp(x) == 0:
        edges = np.array([x.min() - 0.5, x.max() + 0.5])
    else:
        edges = np.histogram_bin_edges(x, bins=bins)
    counts, edges = np.histogram(x, bins=edges)
    return edges, counts


# ---------------------------------------------------------------------------
# running


def initial_states(x0, target: TargetSpec, seed: int, substreams: np.ndarray) -> np.ndarray:
    dim = target.dim
    n = len(substreams)
    if isinstance(x0, str):
        x0 = {"sampler": x0}
    if isinstance(x0, dict):
        kind = x0.get("sampler")
        if kind == "target":
            if target.mean is None:
                raise ConfigurationError("initial sampler 'target' needs a Gaussian target")
            mean, var = target.mean, target.var
        elif kind == "normal":
            mean = np.broadcast_to(np.asarray(x0["mean"], dtype=float), (dim,))
            var = np.broadcast_to(np.asarray(x0["var"], dtype=float), (dim,))
        else:
            raise ConfigurationError(f"unknown initial sampler {kind!r}")
        z = _rng.normals(_rng.stream_keys(seed, substreams, _rng.INIT), np.arange(dim))
        return mean + np.sqrt(var) * z
    point = np.atleast_1d(np.asarray(x0, dtype=float))
    if point.shape != (dim,):
        raise ConfigurationError(f"x0 must have {dim} coordinates")
    return np.tile(point, (n, 1))


def _run_chunk(bundle: ModelBundle, cfg: EnsembleConfig, subs: np.ndarray, cp_idx: list[int]) -> BatchResult:
    x0s = initial_states(cfg.x0, bundle.target, cfg.seed, subs)
    return run_killed_batch(
        bundle.step_drift,
        bundle.killing,
        x0s,
        cfg.horizon,
        cfg.scheme_config,
        cfg.seed,
        subs,
        checkpoint_indices=cp_idx,
        track_moments=True,
    )


def run_ensemble(bundle: ModelBundle, cfg: EnsembleConfig) -> EnsembleResult:
    """Simulate ``cfg.replicas`` killed replicas; replica ``i`` uses substream ``i``.

    Replicas are processed in fixed chunks (optionally on several threads)
    and reduced in chunk order, so the result does not depend on ``workers``.
    """
    times = refined_times(cfg.horizon, cfg.scheme_config)
    cp_idx = [grid_index(times, t, atol=1e-9) for t in cfg.checkpoints]
    subs_all = np.arange(cfg.replicas) if cfg.substreams is None else np.asarray(cfg.substreams)
    chunks = [subs_all[i : i + cfg.chunk_size] for i in range(0, cfg.replicas, cfg.chunk_size)]
    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda s: _run_chunk(bundle, cfg, s, cp_idx), chunks))
    else:
        results = [_run_chunk(bundle, cfg, s, cp_idx) for s in chunks]

    alive = np.sum([r.alive_counts for r in results], axis=0)
    sum_x = np.sum([r.sum_x for r in results], axis=0)
    sum_x2 = np.sum([r.sum_x2 for r in results], axis=0)
    p = alive / cfg.replicas
    curve = SurvivalCurve(times, p, np.sqrt(p * (1.0 - p) / cfg.replicas), cfg.replicas)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = sum_x / alive[:, None]
        var = (sum_x2 - alive[:, None] * mean**2) / (alive[:, None] - 1)

    laws = []
    for t, i in zip(cfg.checkpoints, cp_idx):
        states = np.concatenate([r.checkpoint_states[i] for r in results], axis=0)
        edges, counts = histogram(states, cfg.bins)
        laws.append(ConditionalLaw(float(t), states, len(states), edges, counts))
    taus = np.concatenate([r.tau for r in results])
    return EnsembleResult(laws, curve, times, mean, var, taus)


def survival_rate_fit(result: EnsembleResult, window: tuple[float, float]) -> RateFit:
    return fit_exp_rate(result.survival.times, result.survival.survival, window)


def mean_decay_fit(result: EnsembleResult, reference_mean: float, window: tuple[float, float]) -> RateFit:
    """Exponential fit to ``|survivor mean(t) - reference|`` (first coordinate)."""
    gap = np.abs(result.trace_mean[:, 0] - reference_mean)
    return fit_exp_rate(result.trace_times, gap, window)


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)
