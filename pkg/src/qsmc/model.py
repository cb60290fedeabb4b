"""Target densities, drift potentials and the killing rate built from them.

Everything is expressed through ``U = log(pi)`` and the drift potential
``A``; the killing rate is never formed from ``pi`` itself, which
underflows in the tails long before ``U`` does.

Field callables work on arrays of points with shape ``(..., d)``.  The
public operations also accept a single point (or, in one dimension, a plain
scalar or a 1-d array of scalars) and return floats for single points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate, stats

from .errors import (
    ConfigurationError,
    FieldEvaluationError,
    KillingConstructionError,
    ParameterError,
    ShiftSearchError,
    ToleranceError,
)
from .expr import compile_expression

ArrayFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_GRID_POINTS = 401
DEFAULT_SEARCH_HALF_WIDTH = 50.0
_NEG_TOL = 1e-12


def as_points(y, dim: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Coerce ``y`` to shape ``(..., dim)``; also return the batch shape."""
    y = np.asarray(y, dtype=float)
    if dim == 1 and (y.ndim == 0 or y.shape[-1] != 1):
        y = y[..., None]
    if y.shape[-1] != dim:
        raise ConfigurationError(f"expected points of dimension {dim}, got shape {y.shape}")
    return y, y.shape[:-1]


def _unwrap(values: np.ndarray, batch: tuple[int, ...]):
    return float(values) if batch == () else values


@dataclass(frozen=True)
class ScalarField:
    """A smooth function on R^d with its gradient and Laplacian.

    ``eval`` and ``laplacian`` map ``(..., d) -> (...)``, ``grad`` maps
    ``(..., d) -> (..., d)``.
    """

    dim: int
    eval: ArrayFn
    grad: ArrayFn
    laplacian: ArrayFn
    name: str = "field"

    @classmethod
    def zero(cls, dim: int, name: str = "zero") -> "ScalarField":
        return cls(
            dim,
            lambda y: np.zeros(np.shape(y)[:-1]),
            lambda y: np.zeros(np.shape(y)),
            lambda y: np.zeros(np.shape(y)[:-1]),
            name,
        )

    @classmethod
    def quadratic(cls, center, variance, name: str = "quadratic") -> "ScalarField":
        """``f(y) = -sum_j (y_j - c_j)^2 / (2 v_j)``, the log of an unnormalised Gaussian."""
        c = np.atleast_1d(np.asarray(center, dtype=float))
        v = np.atleast_1d(np.asarray(variance, dtype=float))
        c, v = np.broadcast_arrays(c, v)
        c, v = c.copy(), v.copy()
        if np.any(v <= 0):
            raise ParameterError(f"variances must be positive, got {v}")
        lap = -float(np.sum(1.0 / v))
        return cls(
            c.size,
            lambda y: -np.sum((y - c) ** 2 / (2 * v), axis=-1),
            lambda y: -(y - c) / v,
            lambda y: np.full(np.shape(y)[:-1], lap),
            name,
        )

    def derivative_mismatch(self, points, step: float = 1e-4) -> float:
        """Largest scaled gap between the analytic and central-difference derivatives.

        The gap for each quantity is ``|fd - exact| / max(1, |exact|)``; a
        correct field gives a value well below 1e-5 at ``step=1e-4``.
        """
        pts, _ = as_points(points, self.dim)
        pts = pts.reshape(-1, self.dim)
        worst = 0.0
        fd_grad = np.empty_like(pts)
        fd_lap = np.zeros(len(pts))
        f0 = self.eval(pts)
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = step
            fp, fm = self.eval(pts + e), self.eval(pts - e)
            fd_grad[:, j] = (fp - fm) / (2 * step)
            fd_lap += (fp - 2 * f0 + fm) / step**2
        g = self.grad(pts)
        lap = self.laplacian(pts)
        worst = max(worst, float(np.max(np.abs(fd_grad - g) / np.maximum(1.0, np.abs(g)))))
        worst = max(worst, float(np.max(np.abs(fd_lap - lap) / np.maximum(1.0, np.abs(lap)))))
        return worst


@dataclass(frozen=True)
class TargetSpec:
    """Target density ``pi`` through its log ``U`` (possibly unnormalised).

    ``mean``/``var`` are set for Gaussian targets (used for exact initial
    sampling); ``cdf`` is a normalised one-dimensional CDF when known.
    """

    log_density: ScalarField
    name: str = "target"
    mean: np.ndarray | None = None
    var: np.ndarray | None = None
    cdf: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def dim(self) -> int:
        return self.log_density.dim


@dataclass(frozen=True)
class DriftFunction:
    """Callable drift ``x -> grad A(x)`` with hints used by the exact schemes.

    ``ou`` is ``(nu, tau2)`` when the drift is ``(nu - x) / (2 tau2)`` in 1-d.
    """

    fn: ArrayFn
    ou: tuple[float, float] | None = None
    zero: bool = False

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn(x)


@dataclass(frozen=True)
class DriftSpec:
    """The drift potential ``A`` of ``dX = grad A(X) dt + dW``."""

    potential: ScalarField
    ou: tuple[float, float] | None = None
    zero: bool = False

    @property
    def dim(self) -> int:
        return self.potential.dim

    def gamma_log(self, y) -> np.ndarray:
        """``log gamma = 2A``."""
        pts, batch = as_points(y, self.dim)
        return _unwrap(2.0 * self.potential.eval(pts), batch)

    @property
    def drift_at(self) -> DriftFunction:
        return DriftFunction(self.potential.grad, ou=self.ou, zero=self.zero)

    @classmethod
    def brownian(cls, dim: int) -> "DriftSpec":
        return cls(ScalarField.zero(dim, "A"), zero=True)


@dataclass(frozen=True)
class KillingSpec:
    """Raw rate ``kappa_tilde``, shift ``K`` and the shifted rate ``kappa = kappa_tilde + K``."""

    kappa_tilde: ArrayFn
    shift_K: float
    minimizer: np.ndarray | None = None
    dim: int = 1
    notes: tuple[str, ...] = ()

    def kappa(self, y):
        pts, batch = as_points(y, self.dim)
        return _unwrap(self.kappa_tilde(pts) + self.shift_K, batch)

    def rate(self, pts: np.ndarray) -> np.ndarray:
        """Array-level ``kappa`` on points of shape ``(..., d)`` (no coercion)."""
        return self.kappa_tilde(pts) + self.shift_K

    @classmethod
    def constant(cls, c: float, dim: int = 1) -> "KillingSpec":
        """Killing at constant rate ``c`` (``kappa_tilde = 0``, ``K = c``)."""
        if c < 0:
            raise KillingConstructionError(f"constant killing rate must be >= 0, got {c}")
        return cls(lambda y: np.zeros(np.shape(y)[:-1]), float(c), None, dim, ("constant rate",))


@dataclass
class AssumptionReport:
    l2_integral: float
    l2_finite: bool
    sup_ratio: float | None
    kappa_lower_bound: float
    liminf_estimate: float
    warnings: list[str] = field(default_factory=list)
    l2_stderr: float | None = None
    liminf_estimate_doubled: float | None = None
    kappa_bounded_below: bool = True
    spectral_gap_condition: bool = True
    positive_target: bool = True

    @property
    def passed(self) -> bool:
        """Positivity, square integrability and a bounded-below raw rate all hold on the box.

        The spectral-gap condition is advisory and does not enter.
        """
        return self.positive_target and self.l2_finite and self.kappa_bounded_below

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["passed"] = self.passed
        return out


# ---------------------------------------------------------------------------
# killing rate


def _finite(values: np.ndarray, name: str, pts: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values.reshape(len(pts), -1)).all(axis=1))[0, 0]
        raise FieldEvaluationError(name, pts[bad].tolist())
    return values


def _derivatives(target: TargetSpec, drift: DriftSpec, pts: np.ndarray, check: bool = True):
    if target.dim != drift.dim:
        raise ConfigurationError(f"target is {target.dim}-d but drift is {drift.dim}-d")
    flat = pts.reshape(-1, target.dim)
    U, A = target.log_density, drift.potential
    parts = {
        "U.eval": U.eval(flat),
        "U.grad": U.grad(flat),
        "U.laplacian": U.laplacian(flat),
        "A.grad": A.grad(flat),
        "A.laplacian": A.laplacian(flat),
    }
    if check:
        for name, v in parts.items():
            _finite(v, name, flat)
    return parts


def kappa_tilde_direct(target: TargetSpec, drift: DriftSpec, y):
    """``1/2 (lap pi / pi - 2 grad A . grad pi / pi - 2 lap A)`` via ``U = log pi``.

    Uses ``lap pi / pi = lap U + |grad U|^2`` and ``grad pi / pi = grad U``.
    """
    pts, batch = as_points(y, target.dim)
    p = _derivatives(target, drift, pts)
    gU = p["U.grad"]
    lap_pi_over_pi = p["U.laplacian"] + np.sum(gU * gU, axis=-1)
    cross = 2.0 * np.sum(p["A.grad"] * gU, axis=-1)
    out = 0.5 * (lap_pi_over_pi - cross - 2.0 * p["A.laplacian"])
    return _unwrap(out.reshape(batch), batch)


def _kappa_tilde_log_raw(target: TargetSpec, drift: DriftSpec) -> ArrayFn:
    U, A = target.log_density, drift.potential

    def kt(pts: np.ndarray) -> np.ndarray:
        gU = U.grad(pts)
        diff_grad = gU - 2.0 * A.grad(pts)
        return 0.5 * (U.laplacian(pts) - 2.0 * A.laplacian(pts) + np.sum(gU * diff_grad, axis=-1))

    return kt


def kappa_tilde_log(target: TargetSpec, drift: DriftSpec, y):
    """``1/2 (lap(U - 2A) + grad U . grad(U - 2A))``, the log-space form of the raw rate."""
    pts, batch = as_points(y, target.dim)
    _derivatives(target, drift, pts)
    out = _kappa_tilde_log_raw(target, drift)(pts.reshape(-1, target.dim))
    return _unwrap(out.reshape(batch), batch)


def _normalise_box(box, dim: int) -> np.ndarray:
    b = np.asarray(box, dtype=float)
    if b.ndim == 1:
        b = np.tile(b, (dim, 1))
    if b.shape != (dim, 2) or np.any(b[:, 1] <= b[:, 0]):
        raise ConfigurationError(f"search box must be {dim} nonempty (lo, hi) pairs, got {box!r}")
    return b


def _grid_size(dim: int, grid_points: int) -> int:
    return max(5, min(grid_points, int(round(2e6 ** (1.0 / dim)))))


def _box_grid(box: np.ndarray, n: int) -> tuple[list[np.ndarray], np.ndarray]:
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return axes, mesh


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float, max_iter: int = 500):
    """Minimise a unimodal ``f`` on ``[a, b]`` to bracket width ``tol``.

    Raises:
        ToleranceError: when the bracket stops shrinking before reaching ``tol``.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        if not a < c < d < b and b - a > tol:
            raise ToleranceError(
                f"golden-section bracket [{a!r}, {b!r}] cannot shrink below {b - a:.3g} (tol={tol:.3g})"
            )
    else:
        raise ToleranceError(f"golden-section did not reach tol={tol:.3g} in {max_iter} iterations")
    x = c if fc <= fd else d
    return x, min(fc, fd)


def find_shift_K(
    killing_raw: ArrayFn,
    search_box,
    tol: float = 1e-10,
    grid_points: int = DEFAULT_GRID_POINTS,
    max_sweeps: int = 200,
) -> tuple[float, np.ndarray]:
    """Return ``K = -min kappa_tilde`` over the box and the located minimiser.

    A coarse uniform grid (``grid_points`` per axis, fewer in high
    dimension) locates the basin; golden-section search (1-d) or cyclic
    coordinate descent with golden-section line searches refines it.

    Raises:
        ShiftSearchError: the grid minimum sits on the box boundary with the
            rate still decreasing outward (``kappa_tilde`` may be unbounded below).
        ToleranceError: the refinement did not converge to ``tol``.
    """
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    box = np.asarray(search_box, dtype=float)
    dim = 1 if box.ndim == 1 else box.shape[0]
    box = _normalise_box(box, dim)
    n = _grid_size(dim, grid_points)
    axes, mesh = _box_grid(box, n)
    values = np.asarray(killing_raw(mesh), dtype=float)
    if not np.all(np.isfinite(values)):
        bad = mesh[~np.isfinite(values)][0]
        raise FieldEvaluationError("kappa_tilde", bad.tolist())
    idx = np.unravel_index(int(np.argmin(values)), values.shape)
    for j, i in enumerate(idx):
        if i in (0, n - 1):
            inward = list(idx)
            inward[j] = 1 if i == 0 else n - 2
            if values[idx] < values[tuple(inward)]:
                raise ShiftSearchError(
                    "kappa_tilde may be unbounded below "
                    f"(minimum on the search-box boundary at {mesh[idx].tolist()}, decreasing outward)"
                )
    y = mesh[idx].astype(float).copy()
    h = box[:, 1] - box[:, 0]
    h = h / (n - 1)
    best = float(values[idx])

    def line(j: int, y0: np.ndarray) -> Callable[[float], float]:
        def g(s: float) -> float:
            p = y0.copy()
            p[j] = s
            return float(killing_raw(p[None, :])[0])

        return g

    for _ in range(max_sweeps):
        moved = 0.0
        for j in range(dim):
            lo = max(box[j, 0], y[j] - h[j])
            hi = min(box[j, 1], y[j] + h[j])
            s, v = golden_section(line(j, y), lo, hi, tol)
            if v <= best:
                moved = max(moved, abs(s - y[j]))
                y[j], best = s, v
        if dim == 1 or moved < tol:
            break
    else:
        raise ToleranceError(f"coordinate descent did not settle to tol={tol:.3g} in {max_sweeps} sweeps")
    return -best, y


def build_killing(
    target: TargetSpec,
    drift: DriftSpec,
    K_override: float | None = None,
    search_box=None,
    tol: float = 1e-10,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> KillingSpec:
    """Assemble ``kappa = kappa_tilde + K`` and validate it on the search grid.

    Raises:
        KillingConstructionError: a negative ``kappa`` on the validation grid.
    """
    dim = target.dim
    if search_box is None:
        search_box = [(-DEFAULT_SEARCH_HALF_WIDTH, DEFAULT_SEARCH_HALF_WIDTH)] * dim
    box = _normalise_box(search_box, dim)
    raw = _kappa_tilde_log_raw(target, drift)
    _, mesh = _box_grid(box, _grid_size(dim, grid_points))
    flat = mesh.reshape(-1, dim)
    _derivatives(target, drift, flat)
    kt = raw(flat)
    notes: list[str] = []
    if np.all(np.abs(kt) <= 1e-14):
        msg = "no killing; Langevin stationary case (kappa_tilde vanishes on the validation grid)"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    minimizer = None
    if K_override is None:
        K, minimizer = find_shift_K(raw, box, tol, grid_points)
        K = K + 0.0
    else:
        K = float(K_override)
    kappa = kt + K
    worst = int(np.argmin(kappa))
    if kappa[worst] < -_NEG_TOL * (1.0 + abs(K)):
        raise KillingConstructionError(
            f"kappa = {kappa[worst]:.6g} < 0 at {flat[worst].tolist()} with K = {K:.6g}"
        )
    return KillingSpec(raw, K, minimizer, dim, tuple(notes))


def eigenfunction_relation_residual(target: TargetSpec, drift: DriftSpec, killing: KillingSpec, y):
    """Relative residual of ``1/2 lap phi + grad A . grad phi - kappa phi + K phi`` with ``phi = exp(U - 2A)``.

    All derivatives of ``phi`` are expanded analytically, so the result is a
    pure round-off quantity when the killing rate is the derived one.
    """
    pts, batch = as_points(y, target.dim)
    flat = pts.reshape(-1, target.dim)
    U, A = target.log_density, drift.potential
    gA = A.grad(flat)
    gg = U.grad(flat) - 2.0 * gA
    lap_g = U.laplacian(flat) - 2.0 * A.laplacian(flat)
    terms = np.stack(
        [
            0.5 * lap_g,
            0.5 * np.sum(gg * gg, axis=-1),
            np.sum(gA * gg, axis=-1),
            -killing.rate(flat),
            np.full(len(flat), killing.shift_K),
        ]
    )
    resid = np.abs(terms.sum(axis=0)) / np.maximum(1.0, np.abs(terms).max(axis=0))
    return _unwrap(resid.reshape(batch), batch)


# ---------------------------------------------------------------------------
# assumption checks


def _shell_min(raw: ArrayFn, box: np.ndarray, n: int, frac: float = 0.1) -> float:
    axes, mesh = _box_grid(box, n)
    width = (box[:, 1] - box[:, 0]) * frac
    near = np.zeros(mesh.shape[:-1], dtype=bool)
    for j in range(box.shape[0]):
        c = mesh[..., j]
        near |= (c <= box[j, 0] + width[j]) | (c >= box[j, 1] - width[j])
    return float(np.min(raw(mesh[near])))


def check_assumptions(
    target: TargetSpec,
    drift: DriftSpec,
    quad_box=None,
    quad_tol: float = 1e-10,
    ceiling: float = 1e100,
    mc_samples: int = 200_000,
    seed: int = 0,
) -> AssumptionReport:
    """Numerically probe the standing assumptions on a finite box.

    * positivity: ``U`` finite on a grid over the box;
    * square integrability: ``int pi^2 / gamma`` by adaptive quadrature
      (d <= 2) or plain Monte Carlo with a standard error (d > 2);
    * bounded-below raw rate: the minimiser search must end in the interior;
    * spectral-gap sufficient condition: the minimum of ``kappa_tilde`` on
      the outer 10% shell of the box must be positive and must not halve
      when the box is doubled.

    Nothing here is a proof; the report says what was seen on the box.
    """
    dim = target.dim
    if quad_box is None:
        quad_box = [(-DEFAULT_SEARCH_HALF_WIDTH, DEFAULT_SEARCH_HALF_WIDTH)] * dim
    box = _normalise_box(quad_box, dim)
    U, A = target.log_density, drift.potential
    notes: list[str] = []

    n = {1: 2001, 2: 201}.get(dim, _grid_size(dim, 41))
    _, mesh = _box_grid(box, n)
    flat = mesh.reshape(-1, dim)
    u = U.eval(flat)
    _derivatives(target, drift, flat)
    positive = bool(np.all(np.isfinite(u)))
    log_ratio = u - 2.0 * A.eval(flat)
    log_integrand = u + log_ratio
    _finite(log_integrand, "pi^2/gamma", flat)
    peak_idx = int(np.argmax(log_integrand))
    peak = float(log_integrand[peak_idx])

    on_face = np.zeros(mesh.shape[:-1], dtype=bool)
    for j in range(dim):
        on_face |= (mesh[..., j] == box[j, 0]) | (mesh[..., j] == box[j, 1])
    on_face = on_face.reshape(-1)
    face_peak = float(np.max(log_integrand[on_face]))
    growing_outward = bool(on_face[peak_idx])
    if face_peak > peak + math.log(1e-8):
        notes.append("integrand pi^2/gamma has not decayed to 1e-8 of its peak on the quadrature box boundary")

    def integrand_nd(*y):
        p = np.asarray(y, dtype=float)[None, :]
        return math.exp(float(2.0 * U.eval(p)[0] - 2.0 * A.eval(p)[0]) - peak)

    stderr = None
    if dim == 1:
        x_peak = float(flat[peak_idx, 0])
        inner = [x_peak] if box[0, 0] < x_peak < box[0, 1] else None
        val, _ = integrate.quad(integrand_nd, box[0, 0], box[0, 1], points=inner, epsabs=0.0, epsrel=quad_tol, limit=500)
    elif dim == 2:
        val, _ = integrate.dblquad(
            lambda y2, y1: integrand_nd(y1, y2), box[0, 0], box[0, 1], box[1, 0], box[1, 1], epsabs=0.0, epsrel=max(quad_tol, 1e-8)
        )
    else:
        rng = np.random.default_rng(seed)
        pts = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((mc_samples, dim))
        vals = np.exp(2.0 * U.eval(pts) - 2.0 * A.eval(pts) - peak)
        vol = float(np.prod(box[:, 1] - box[:, 0]))
        val = float(vals.mean() * vol)
        stderr = float(vals.std(ddof=1) / math.sqrt(mc_samples) * vol)
        notes.append(f"Monte Carlo quadrature over {mc_samples} uniform points (d={dim})")
    with np.errstate(over="ignore"):
        l2 = float(val * np.exp(peak))
        if stderr is not None:
            stderr = float(stderr * np.exp(peak))
    l2_finite = bool(np.isfinite(l2) and l2 < ceiling and not growing_outward)
    if not l2_finite:
        notes.append("square-integrability flag: int pi^2/gamma appears infinite (integrand grows toward the box boundary)")

    with np.errstate(over="ignore"):
        sup_ratio = float(np.exp(np.max(log_ratio)))

    raw = _kappa_tilde_log_raw(target, drift)
    bounded = True
    try:
        K, _ = find_shift_K(raw, box, tol=1e-8)
        lower = -K
    except ShiftSearchError as exc:
        bounded = False
        lower = float(np.min(raw(flat)))
        notes.append(str(exc))
    kt = raw(flat)
    if np.all(np.abs(kt) <= 1e-14):
        notes.append("kappa_tilde vanishes on the box: no killing (Langevin stationary case)")

    n_shell = _grid_size(dim, 401)
    liminf = _shell_min(raw, box, n_shell)
    center = box.mean(axis=1, keepdims=True)
    big = center + 2.0 * (box - center)
    liminf2 = _shell_min(raw, big, n_shell)
    gap_ok = bool(liminf > 0 and liminf2 > 0.5 * liminf)
    if not gap_ok:
        notes.append(
            "spectral-gap sufficient condition fails: liminf kappa_tilde appears <= 0 "
            f"(shell minimum {liminf:.4g} on the box, {liminf2:.4g} on the doubled box); expect slower convergence"
        )
    return AssumptionReport(
        l2_integral=l2,
        l2_finite=l2_finite,
        sup_ratio=sup_ratio,
        kappa_lower_bound=float(lower),
        liminf_estimate=liminf,
        warnings=notes,
        l2_stderr=stderr,
        liminf_estimate_doubled=liminf2,
        kappa_bounded_below=bounded,
        spectral_gap_condition=gap_ok,
        positive_target=positive,
    )


# ---------------------------------------------------------------------------
# built-in models


def gaussian_model(mu=0.0, sigma2=1.0) -> tuple[TargetSpec, DriftSpec]:
    """Gaussian target with independent axes under Brownian motion (A = 0)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma2 = np.atleast_1d(np.asarray(sigma2, dtype=float))
    mu, sigma2 = (a.copy() for a in np.broadcast_arrays(mu, sigma2))
    U = ScalarField.quadratic(mu, sigma2, "U")
    cdf = stats.norm(mu[0], math.sqrt(sigma2[0])).cdf if mu.size == 1 else None
    return TargetSpec(U, "gaussian", mu, sigma2, cdf), DriftSpec.brownian(mu.size)


def cauchy_model() -> tuple[TargetSpec, DriftSpec]:
    """Standard Cauchy target ``pi ~ 1/(1+y^2)`` under Brownian motion."""
    U = ScalarField(
        1,
        lambda y: -np.log1p(y[..., 0] ** 2),
        lambda y: -2.0 * y / (1.0 + y**2),
        lambda y: -2.0 * (1.0 - y[..., 0] ** 2) / (1.0 + y[..., 0] ** 2) ** 2,
        "U",
    )
    return TargetSpec(U, "cauchy", cdf=stats.cauchy().cdf), DriftSpec.brownian(1)


def exp_tail_model(beta: float = 1.0) -> tuple[TargetSpec, DriftSpec]:
    """Smooth target with exponential tails, ``U = -beta sqrt(1 + y^2)``, under Brownian motion."""
    if beta <= 0:
        raise ParameterError("beta must be positive")

    def s(y):
        return np.sqrt(1.0 + y[..., 0] ** 2)

    U = ScalarField(
        1,
        lambda y: -beta * s(y),
        lambda y: -beta * y / s(y)[..., None],
        lambda y: -beta / s(y) ** 3,
        "U",
    )
    return TargetSpec(U, "exp-tail"), DriftSpec.brownian(1)


def ou_example_model(nu=2.0, tau2=4.0, mu=-1.0, sigma2=2.0) -> tuple[TargetSpec, DriftSpec]:
    """Gaussian ``N(mu, sigma2)`` target under the OU drift ``(nu - x)/(2 tau2)``."""
    if tau2 <= 0 or sigma2 <= 0:
        raise ParameterError("tau2 and sigma2 must be positive")
    U = ScalarField.quadratic(mu, sigma2, "U")
    A = ScalarField.quadratic(nu, 2.0 * tau2, "A")
    target = TargetSpec(U, "ou-example", np.array([mu], float), np.array([sigma2], float), stats.norm(mu, math.sqrt(sigma2)).cdf)
    return target, DriftSpec(A, ou=(float(nu), float(tau2)))


def custom_model(
    U: str,
    U_grad: Sequence[str] | str,
    U_lap: str,
    A: str = "0",
    A_grad: Sequence[str] | str | None = None,
    A_lap: str = "0",
    dim: int = 1,
    constants: Mapping[str, float] | None = None,
) -> tuple[TargetSpec, DriftSpec]:
    """Fields from expression strings; derivatives are supplied, not derived."""
    if isinstance(U_grad, str):
        U_grad = [U_grad]
    if A_grad is None:
        A_grad = ["0"] * dim
    elif isinstance(A_grad, str):
        A_grad = [A_grad]
    if len(U_grad) != dim or len(A_grad) != dim:
        raise ConfigurationError(f"gradients need {dim} components")

    def make(value: str, grad: Sequence[str], lap: str, name: str) -> ScalarField:
        f = compile_expression(value, dim, constants)
        gs = [compile_expression(g, dim, constants) for g in grad]
        lp = compile_expression(lap, dim, constants)
        return ScalarField(dim, f, lambda y: np.stack([g(y) for g in gs], axis=-1), lp, name)

    drift_zero = A.strip() == "0" and all(g.strip() == "0" for g in A_grad)
    return (
        TargetSpec(make(U, U_grad, U_lap, "U"), "custom"),
        DriftSpec(make(A, A_grad, A_lap, "A"), zero=drift_zero),
    )


MODELS: dict[str, Callable[..., tuple[TargetSpec, DriftSpec]]] = {
    "gaussian": gaussian_model,
    "cauchy": cauchy_model,
    "exp-tail": exp_tail_model,
    "ou-example": ou_example_model,
    "custom": custom_model,
}


def make_model(key: str, params: Mapping | None = None) -> tuple[TargetSpec, DriftSpec]:
    try:
        factory = MODELS[key]
    except KeyError:
        raise ConfigurationError(f"unknown model {key!r}; choose from {sorted(MODELS)}") from None
    try:
        return factory(**dict(params or {}))
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for model {key!r}: {exc}") from None
