"""Killing times from cumulative hazard against an independent Exp(1) threshold.

The hazard ``H(t) = int_0^t kappa(X_s) ds`` is integrated with the
trapezoid rule on the simulation grid; a replica dies on the first step
where ``H`` reaches its threshold ``xi``, and the killing time is placed by
linear interpolation of ``H`` inside that step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .dynamics import PathGrid, SchemeConfig, iter_states, time_grid
from .errors import ContractViolation
from .model import KillingSpec

_NEG_TOL = 1e-12


@dataclass(frozen=True)
class KilledTrajectory:
    path: PathGrid
    killed: bool
    tau: float | None
    hazard_trace: np.ndarray
    xi: float


def _rate_fn(kappa) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(kappa, KillingSpec):
        return kappa.rate
    return kappa


def _checked_rate(rate: Callable, x: np.ndarray) -> np.ndarray:
    k = np.asarray(rate(x), dtype=float)
    bad = ~(k >= -_NEG_TOL)
    if bad.any():
        i = int(np.argmax(bad))
        raise ContractViolation(f"killing rate {k.flat[i]!r} is negative or undefined at state {x[i].tolist()}")
    return np.maximum(k, 0.0)


def accumulate_hazard(path: PathGrid, kappa) -> np.ndarray:
    """Trapezoidal cumulative hazard at every grid time of ``path`` (starts at 0)."""
    states = np.asarray(path.states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    k = _checked_rate(_rate_fn(kappa), states)
    inc = 0.5 * (k[:-1] + k[1:]) * np.diff(path.times)
    return np.concatenate([[0.0], np.cumsum(inc)])


@dataclass
class BatchResult:
    """Outcome of :func:`run_killed_batch` for one block of replicas."""

    times: np.ndarray
    xi: np.ndarray
    tau: np.ndarray  # nan where the replica survived the horizon
    death_step: np.ndarray  # grid index of the step where the threshold was crossed, -1 if none
    alive_counts: np.ndarray  # per grid time
    checkpoint_states: dict[int, np.ndarray] = field(default_factory=dict)  # grid index -> survivor states
    checkpoint_rows: dict[int, np.ndarray] = field(default_factory=dict)
    sum_x: np.ndarray | None = None  # (n_times, d), survivors only
    sum_x2: np.ndarray | None = None
    final_states: np.ndarray | None = None
    paths: np.ndarray | None = None  # (n_times, n, d), only when recorded
    hazard: np.ndarray | None = None  # (n_times, n)

    @property
    def killed(self) -> np.ndarray:
        return ~np.isnan(self.tau)


def refined_times(horizon: float, cfg: SchemeConfig) -> np.ndarray:
    coarse = time_grid(horizon, cfg.dt)
    m = 1 << cfg.bridge_levels
    if m == 1:
        return coarse
    steps = np.diff(coarse)
    fine = coarse[:-1, None] + steps[:, None] * (np.arange(m) / m)
    return np.append(fine.ravel(), coarse[-1])


def run_killed_batch(
    drift_at: Callable,
    kappa,
    x0s: np.ndarray,
    horizon: float,
    cfg: SchemeConfig,
    seed: int,
    substreams: np.ndarray,
    checkpoint_indices: Sequence[int] = (),
    record_paths: bool = False,
    track_moments: bool = False,
    compact_below: float = 0.5,
) -> BatchResult:
    """Simulate a block of killed replicas in lockstep.

    Replica ``i`` of the block draws its path noise and threshold from
    substream ``substreams[i]``.  Dead replicas stop being advanced (the
    working set is compacted when it shrinks by ``compact_below``), which
    changes nothing about the survivors' values.
    """
    rate = _rate_fn(kappa)
    x0s = np.asarray(x0s, dtype=float)
    n, dim = x0s.shape
    substreams = np.asarray(substreams)
    times = refined_times(horizon, cfg)
    n_times = len(times)
    wanted = set(int(i) for i in checkpoint_indices)

    xi = _rng.exponentials(_rng.stream_keys(seed, substreams, _rng.KILL), [0])[:, 0]
    tau = np.full(n, np.nan)
    alive = np.ones(n, dtype=bool)
    hazard = np.zeros(n)
    k_now = _checked_rate(rate, x0s)
    alive_counts = np.zeros(n_times, dtype=np.int64)
    alive_counts[0] = n
    death_step = np.full(n, -1, dtype=np.int64)
    res = BatchResult(times, xi, tau, death_step, alive_counts)
    if track_moments:
        res.sum_x = np.zeros((n_times, dim))
        res.sum_x2 = np.zeros((n_times, dim))
        res.sum_x[0] = x0s.sum(axis=0)
        res.sum_x2[0] = (x0s**2).sum(axis=0)
    if record_paths:
        res.paths = np.full((n_times, n, dim), np.nan)
        res.paths[0] = x0s
        res.hazard = np.full((n_times, n), np.nan)
        res.hazard[0] = 0.0
    if 0 in wanted:
        res.checkpoint_states[0] = x0s.copy()
        res.checkpoint_rows[0] = np.arange(n)
    final = x0s.copy()

    working = np.arange(n)

    def active() -> np.ndarray:
        nonlocal working
        if alive[working].sum() < compact_below * len(working):
            working = working[alive[working]]
        return working

    step = 0
    for step, t_prev, t_next, rows, xr in iter_states(drift_at, x0s, horizon, cfg, seed, substreams, active):
        live = alive[rows]
        k_next = np.zeros(len(rows))
        k_next[live] = _checked_rate(rate, xr[live])
        h_prev = hazard[rows]
        h_next = h_prev + 0.5 * (k_now[rows] + k_next) * (t_next - t_prev)
        crossed = live & (h_next >= xi[rows])
        if crossed.any():
            c = rows[crossed]
            frac = (xi[c] - h_prev[crossed]) / (h_next[crossed] - h_prev[crossed])
            tau[c] = t_prev + frac * (t_next - t_prev)
            alive[c] = False
            death_step[c] = step
        upd = rows[live]
        hazard[upd] = h_next[live]
        k_now[upd] = k_next[live]
        final[upd] = xr[live]
        now_alive = live & ~crossed
        alive_counts[step] = int(alive.sum())
        if record_paths:
            res.paths[step, upd] = xr[live]
            res.hazard[step, upd] = h_next[live]
        if track_moments:
            xa = xr[now_alive]
            res.sum_x[step] = xa.sum(axis=0)
            res.sum_x2[step] = (xa**2).sum(axis=0)
        if step in wanted:
            res.checkpoint_states[step] = xr[now_alive].copy()
            res.checkpoint_rows[step] = rows[now_alive]
    for s in range(step + 1, n_times):
        # every replica died before the horizon
        if s in wanted:
            res.checkpoint_states[s] = np.empty((0, dim))
            res.checkpoint_rows[s] = np.empty(0, dtype=np.int64)
    res.final_states = final
    return res


def simulate_killed(
    drift_at: Callable, kappa, x0, horizon: float, cfg: SchemeConfig, rng: _rng.RngStream
) -> KilledTrajectory:
    """One killed replica; the path and hazard trace are truncated at the killing step."""
    start = np.atleast_1d(np.asarray(x0, dtype=float))[None, :]
    res = run_killed_batch(
        drift_at, kappa, start, horizon, cfg, rng.seed, np.array([rng.substream]), record_paths=True
    )
    tau = float(res.tau[0])
    killed = not np.isnan(tau)
    last = int(res.death_step[0]) if killed else len(res.times) - 1
    path = PathGrid(res.times[: last + 1].copy(), res.paths[: last + 1, 0, :].copy())
    return KilledTrajectory(path, killed, tau if killed else None, res.hazard[: last + 1, 0].copy(), float(res.xi[0]))


def killing_time_oracle_constant(c: float, rng: _rng.RngStream) -> float:
    """An exact Exp(c) draw from the replica's oracle substream."""
    if not c > 0:
        raise ValueError("rate must be positive")
    return rng.exponential(_rng.ORACLE, 0) / c


def oracle_constant_batch(c: float, seed: int, substreams) -> np.ndarray:
    """Vectorised :func:`killing_time_oracle_constant` over many substreams."""
    if not c > 0:
        raise ValueError("rate must be positive")
    return _rng.exponentials(_rng.stream_keys(seed, substreams, _rng.ORACLE), [0])[:, 0] / c
