"""Unkilled diffusion paths: Euler-Maruyama, exact OU/Brownian steps and the Langevin Q-process drift."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import rng as _rng
from .errors import ConfigurationError, FieldEvaluationError
from .model import DriftFunction, DriftSpec, TargetSpec

SCHEMES = ("euler", "exact_ou", "exact_bm")
MAX_BRIDGE_LEVELS = 16


@dataclass(frozen=True)
class PathGrid:
    times: np.ndarray
    states: np.ndarray  # (len(times), d)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


@dataclass(frozen=True)
class SchemeConfig:
    """Time step and integrator.

    ``bridge_levels = L`` refines every step of size ``dt`` into ``2**L``
    substeps whose Brownian increments are Brownian-bridge refinements of the
    increment the unrefined run would use.  Runs that differ only in ``L``
    therefore share the same Brownian path at the coarse grid times, which
    is what a step-halving bias check needs.
    """

    dt: float = 0.01
    scheme: str = "euler"
    bridge_levels: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not 0 <= self.bridge_levels <= MAX_BRIDGE_LEVELS:
            raise ConfigurationError(f"bridge_levels must be in [0, {MAX_BRIDGE_LEVELS}]")


def time_grid(horizon: float, dt: float) -> np.ndarray:
    """``0, dt, 2dt, ...`` with the final step shortened to land exactly on ``horizon``."""
    if not horizon > 0:
        raise ConfigurationError(f"horizon must be positive, got {horizon}")
    n = int(math.ceil(horizon / dt - 1e-9))
    times = np.arange(n + 1, dtype=float) * dt
    times[-1] = horizon
    return times


def grid_index(times: np.ndarray, t: float, atol: float = 1e-12) -> int:
    i = int(np.searchsorted(times, t - atol))
    if i >= len(times) or abs(times[i] - t) > atol * max(1.0, abs(t)):
        raise ConfigurationError(f"time {t} is not on the simulation grid")
    return i


def euler_step(drift_at: Callable, x, dt: float, noise):
    """``x + drift(x) dt + sqrt(dt) noise``."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    x = np.asarray(x, dtype=float)
    b = np.asarray(drift_at(x), dtype=float)
    if not np.all(np.isfinite(b)):
        raise FieldEvaluationError("drift", detail="Euler step")
    return x + b * dt + math.sqrt(dt) * np.asarray(noise, dtype=float)


def ou_exact_step(nu: float, tau2: float, x, dt: float, noise):
    """Exact transition of ``dX = (nu - X)/(2 tau2) dt + dW`` over time ``dt``."""
    if not tau2 > 0:
        raise ConfigurationError("tau2 must be positive")
    if dt < 0:
        raise ConfigurationError("dt must be non-negative")
    decay = math.exp(-dt / (2.0 * tau2))
    sd = math.sqrt(tau2 * -math.expm1(-dt / tau2))
    return nu + (np.asarray(x, dtype=float) - nu) * decay + sd * np.asarray(noise, dtype=float)


def bm_exact_step(x, dt: float, noise):
    return np.asarray(x, dtype=float) + math.sqrt(dt) * np.asarray(noise, dtype=float)


def langevin_drift(target: TargetSpec, drift: DriftSpec) -> DriftFunction:
    """Drift ``1/2 grad log(pi^2 / gamma) = grad U - grad A`` of the Q-process.

    When the result is linear in one dimension (Gaussian target under an OU
    or Brownian base) the OU hint is attached so the exact scheme can be used.
    """
    U, A = target.log_density, drift.potential
    if U.dim != A.dim:
        raise ConfigurationError("target and drift dimensions differ")

    def fn(y):
        return U.grad(y) - A.grad(y)

    hint = None
    if target.dim == 1 and target.mean is not None and (drift.zero or drift.ou is not None):
        rate = 1.0 / float(target.var[0])
        pull = float(target.mean[0]) / float(target.var[0])
        if drift.ou is not None:
            nu, tau2 = drift.ou
            rate -= 1.0 / (2.0 * tau2)
            pull -= nu / (2.0 * tau2)
        if rate > 0:
            hint = (pull / rate, 1.0 / (2.0 * rate))
    return DriftFunction(fn, ou=hint)


def _check_scheme(drift_at: Callable, cfg: SchemeConfig, dim: int) -> None:
    if cfg.scheme == "exact_ou" and (dim != 1 or getattr(drift_at, "ou", None) is None):
        raise ConfigurationError("scheme exact_ou needs a one-dimensional OU drift")
    if cfg.scheme == "exact_bm" and not getattr(drift_at, "zero", False):
        raise ConfigurationError("scheme exact_bm needs a zero drift")


def advance(drift_at: Callable, x: np.ndarray, h: float, noise: np.ndarray, scheme: str) -> np.ndarray:
    if scheme == "euler":
        return euler_step(drift_at, x, h, noise)
    if scheme == "exact_ou":
        nu, tau2 = drift_at.ou
        return ou_exact_step(nu, tau2, x, h, noise)
    return bm_exact_step(x, h, noise)


def step_noise(path_keys: np.ndarray, bridge_keys: np.ndarray, k: int, dim: int, levels: int) -> np.ndarray:
    """Unit normals for the ``2**levels`` substeps of coarse step ``k``: shape ``(n, 2**levels, dim)``.

    Each segment's normal ``z`` splits into ``(z + b)/sqrt 2`` and
    ``(z - b)/sqrt 2`` with an independent bridge normal ``b``; bridge
    counters are indexed by heap position so refinements are nested.
    """
    z = _rng.normals(path_keys, np.arange(k * dim, (k + 1) * dim))[:, None, :]
    for level in range(1, levels + 1):
        nodes = (1 << (level - 1)) + np.arange(1 << (level - 1))
        counters = ((k << MAX_BRIDGE_LEVELS) + nodes)[:, None] * dim + np.arange(dim)
        b = _rng.normals(bridge_keys, counters)
        left = (z + b) / math.sqrt(2.0)
        right = (z - b) / math.sqrt(2.0)
        z = np.stack([left, right], axis=2).reshape(z.shape[0], -1, dim)
    return z


def iter_states(
    drift_at: Callable,
    x0: np.ndarray,
    horizon: float,
    cfg: SchemeConfig,
    seed: int,
    substreams: np.ndarray,
    active: Callable[[], np.ndarray] | None = None,
) -> Iterator[tuple[int, float, float, np.ndarray, np.ndarray]]:
    """Advance a batch of replicas in lockstep over the refined time grid.

    Yields ``(step, t_prev, t_next, rows, x_rows)`` after every substep,
    where ``rows`` indexes the replicas that were advanced.  ``active``, if
    given, is called before each coarse step and returns the subset of rows
    still worth simulating; the others are frozen.
    """
    x = np.array(x0, dtype=float, copy=True)
    n, dim = x.shape
    _check_scheme(drift_at, cfg, dim)
    coarse = time_grid(horizon, cfg.dt)
    path_keys = _rng.stream_keys(seed, substreams, _rng.PATH)
    bridge_keys = _rng.stream_keys(seed, substreams, _rng.BRIDGE) if cfg.bridge_levels else path_keys
    m = 1 << cfg.bridge_levels
    rows = np.arange(n)
    step = 0
    for k in range(len(coarse) - 1):
        if active is not None:
            rows = active()
            if rows.size == 0:
                return
        noise = step_noise(path_keys[rows], bridge_keys[rows], k, dim, cfg.bridge_levels)
        t0, t1 = coarse[k], coarse[k + 1]
        h = (t1 - t0) / m
        xr = x[rows]
        for j in range(m):
            t_prev = t0 + j * h
            t_next = t1 if j == m - 1 else t0 + (j + 1) * h
            xr = advance(drift_at, xr, h, noise[:, j, :], cfg.scheme)
            step += 1
            yield step, t_prev, t_next, rows, xr
        x[rows] = xr


def simulate_path(drift_at: Callable, x0, horizon: float, cfg: SchemeConfig, rng: _rng.RngStream) -> PathGrid:
    """One replica's path on the (refined) grid; deterministic given ``rng``."""
    start = np.atleast_1d(np.asarray(x0, dtype=float))[None, :]
    times, states = [0.0], [start[0].copy()]
    for _, _, t, _, xr in iter_states(drift_at, start, horizon, cfg, rng.seed, np.array([rng.substream])):
        times.append(t)
        states.append(xr[0].copy())
    return PathGrid(np.array(times), np.array(states))


def simulate_paths(
    drift_at: Callable, x0s, horizon: float, cfg: SchemeConfig, seed: int, substreams=None
) -> PathGrid:
    """Batch version of :func:`simulate_path`; ``states`` has shape ``(len(times), n, d)``."""
    x0s = np.asarray(x0s, dtype=float)
    if x0s.ndim == 1:
        x0s = x0s[:, None]
    if substreams is None:
        substreams = np.arange(len(x0s))
    times, states = [0.0], [x0s.copy()]
    for _, _, t, _, xr in iter_states(drift_at, x0s, horizon, cfg, seed, np.asarray(substreams)):
        times.append(t)
        states.append(xr.copy())
    return PathGrid(np.array(times), np.stack(states))


@dataclass(frozen=True)
class LongRunMoments:
    mean: np.ndarray
    var: np.ndarray
    se_mean: np.ndarray  # from the spread of per-replica time averages
    replicas: int
    samples_per_replica: int


def long_run_moments(
    drift_at: Callable,
    x0s,
    horizon: float,
    cfg: SchemeConfig,
    seed: int,
    burn_in: float = 0.5,
    substreams=None,
) -> LongRunMoments:
    """Time averages of ``X`` and ``X^2`` over ``(burn_in * horizon, horizon]``, pooled over replicas.

    States are accumulated on the fly, so memory does not grow with the horizon.
    """
    if not 0 <= burn_in < 1:
        raise ConfigurationError("burn_in must be in [0, 1)")
    x0s = np.asarray(x0s, dtype=float)
    if x0s.ndim == 1:
        x0s = x0s[:, None]
    n, dim = x0s.shape
    subs = np.arange(n) if substreams is None else np.asarray(substreams)
    start = burn_in * horizon
    s1 = np.zeros((n, dim))
    s2 = np.zeros((n, dim))
    count = 0
    for _, _, t, _, xr in iter_states(drift_at, x0s, horizon, cfg, seed, subs):
        if t > start + 1e-12:
            s1 += xr
            s2 += xr * xr
            count += 1
    if count == 0:
        raise ConfigurationError("no samples after burn-in")
    per_mean = s1 / count
    mean = per_mean.mean(axis=0)
    var = (s2.sum(axis=0) / (n * count) - mean**2) * (n * count) / max(n * count - 1, 1)
    se = per_mean.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(dim, np.nan)
    return LongRunMoments(mean, var, se, n, count)
