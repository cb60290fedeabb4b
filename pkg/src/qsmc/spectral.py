"""Closed-form OU oracles and a finite-difference killed generator in one dimension.

The killed generator ``-1/2 d2 - A' d + kappa`` is discretised in flux form,

    (L f)_i = -(1 / (2 gamma_i h^2)) [gamma_{i+1/2} (f_{i+1} - f_i) - gamma_{i-1/2} (f_i - f_{i-1})] + kappa_i f_i,

with ``gamma = exp(2A)`` at the cell midpoints and zero Dirichlet values
just outside the grid.  ``gamma_i L_{i,j}`` is symmetric, so
``S = Gamma^{1/2} L Gamma^{-1/2}`` is a symmetric tridiagonal matrix and
its eigenvalues are those of ``L``.  All exponentials are formed from
differences of ``2A`` so nothing overflows on wide grids.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigurationError, InapplicableBoundError, NumericError, ParameterError
from .model import DriftSpec, KillingSpec, ScalarField, TargetSpec

PHI_DECAY = 1e-6
EIG_RESIDUAL = 1e-10


@dataclass(frozen=True)
class OUParams:
    nu: float = 2.0
    tau2: float = 4.0
    mu: float = -1.0
    sigma2: float = 2.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ParameterError("sigma2 must be positive")
        if not self.tau2 > self.sigma2:
            raise ParameterError(
                f"need tau2 > sigma2 (diffusion tails heavier than the target's), got tau2={self.tau2}, sigma2={self.sigma2}"
            )


def ou_killing_constants(p: OUParams) -> tuple[float, float, float]:
    """``(K, y_star, leading_coeff)`` with ``kappa(y) = leading_coeff (y - y_star)^2``."""
    nu, tau2, mu, s2 = p.nu, p.tau2, p.mu, p.sigma2
    d = tau2 - s2
    K = (mu - nu) ** 2 / (8 * tau2 * d) + d / (2 * tau2 * s2)
    mid = (mu + nu) / 2
    y_star = mid + tau2 / d * (mu - mid)
    return K, y_star, d / (2 * tau2 * s2**2)


def ou_qprocess(p: OUParams) -> tuple[float, float]:
    """Mean and variance of the Gaussian stationary law of the Q-process."""
    nu, tau2, mu, s2 = p.nu, p.tau2, p.mu, p.sigma2
    denom = 2 * tau2 - s2
    return (2 * mu * tau2 - nu * s2) / denom, s2 * tau2 / denom


def ou_spectrum(p: OUParams, n_max: int) -> tuple[np.ndarray, float]:
    """Eigenvalues ``n (2 tau2 - sigma2) / (2 sigma2 tau2)`` of the Langevin generator, and the gap."""
    gap = (2 * p.tau2 - p.sigma2) / (2 * p.sigma2 * p.tau2)
    return np.arange(n_max + 1) * gap, gap


@dataclass(frozen=True)
class GridSpec:
    """``n`` interior nodes ``lo + (i + 1) h`` with ``h = (hi - lo) / (n + 1)``; Dirichlet at lo and hi."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.hi > self.lo or self.n < 1:
            raise ConfigurationError(f"bad grid {self}")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.n + 1)

    @property
    def points(self) -> np.ndarray:
        return self.lo + self.h * np.arange(1, self.n + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.lo + self.h * (np.arange(self.n + 1) + 0.5)

    def refined(self) -> "GridSpec":
        """Same interval with half the spacing."""
        return GridSpec(self.lo, self.hi, 2 * self.n + 1)


@dataclass
class GeneratorMatrix:
    grid: GridSpec
    diag: np.ndarray  # symmetric form
    offdiag: np.ndarray
    log_gamma: np.ndarray  # 2A at the nodes
    log_gamma_mid: np.ndarray  # 2A at the n + 1 midpoints
    kappa: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def gamma_weights(self) -> np.ndarray:
        return np.exp(self.log_gamma)

    @property
    def _w_up(self) -> np.ndarray:
        return np.exp(self.log_gamma_mid[1:] - self.log_gamma)

    @property
    def _w_down(self) -> np.ndarray:
        return np.exp(self.log_gamma_mid[:-1] - self.log_gamma)

    def bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(lower, diag, upper)`` of the unsymmetrised operator."""
        c = 1.0 / (2.0 * self.h**2)
        upper = -c * self._w_up[:-1]
        lower = -c * self._w_down[1:]
        return lower, self.diag, upper

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Unsymmetrised operator applied in flux form (exact on constants)."""
        f = np.asarray(f, dtype=float)
        padded = np.concatenate([[0.0], f, [0.0]])
        flux = np.diff(padded)
        out = -(self._w_up * flux[1:] - self._w_down * flux[:-1]) / (2.0 * self.h**2)
        return out + self.kappa * f

    def gamma_symmetry_error(self) -> float:
        """``max |gamma_i L_{i,i+1} - gamma_{i+1} L_{i+1,i}|`` relative to the largest entry."""
        lower, diag, upper = self.bands()
        a = np.log(-upper) + self.log_gamma[:-1]
        b = np.log(-lower) + self.log_gamma[1:]
        return float(np.max(np.abs(np.expm1(a - b)))) if len(a) else 0.0

    def gershgorin(self) -> tuple[float, float]:
        off = np.abs(np.concatenate([[0.0], self.offdiag])) + np.abs(np.concatenate([self.offdiag, [0.0]]))
        return float(np.min(self.diag - off)), float(np.max(self.diag + off))

    def to_symmetric(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f, dtype=float) * np.exp(0.5 * (self.log_gamma - self.log_gamma.max()))

    def from_symmetric(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) * np.exp(-0.5 * (self.log_gamma - self.log_gamma.max()))

    @classmethod
    def from_bands(cls, diag, offdiag) -> "GeneratorMatrix":
        """Wrap an arbitrary symmetric tridiagonal matrix (unit weights, unit spacing)."""
        diag = np.asarray(diag, dtype=float)
        n = len(diag)
        return cls(GridSpec(0.0, n + 1.0, n), diag, np.asarray(offdiag, dtype=float), np.zeros(n), np.zeros(n + 1), np.zeros(n))


def discretize_generator(
    target: TargetSpec | None,
    drift: DriftSpec,
    killing: KillingSpec | None,
    grid: GridSpec,
) -> GeneratorMatrix:
    """Flux-form discretisation of the killed generator on ``grid``.

    ``killing=None`` means no killing.  With a target, the ground state
    ``phi = exp(U - 2A)`` must have decayed below 1e-6 of its peak at both
    ends of the grid; otherwise a warning is attached (and emitted).
    """
    if drift.dim != 1:
        raise ConfigurationError("the spectral oracle is one-dimensional")
    x = grid.points[:, None]
    xm = grid.midpoints[:, None]
    lg = 2.0 * drift.potential.eval(x)
    lgm = 2.0 * drift.potential.eval(xm)
    kap = np.zeros(grid.n) if killing is None else np.asarray(killing.rate(x), dtype=float)
    c = 1.0 / (2.0 * grid.h**2)
    diag = c * (np.exp(lgm[1:] - lg) + np.exp(lgm[:-1] - lg)) + kap
    off = -c * np.exp(lgm[1:-1] - 0.5 * (lg[:-1] + lg[1:]))
    if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(off))):
        raise NumericError("non-finite generator entries; narrow the grid")
    notes: list[str] = []
    if target is not None:
        log_phi = target.log_density.eval(x) - lg
        edge = max(log_phi[0], log_phi[-1]) - log_phi.max()
        if edge > math.log(PHI_DECAY):
            msg = f"grid too narrow: phi at the boundary is {math.exp(edge):.2e} of its peak (want < {PHI_DECAY:g})"
            warnings.warn(msg, stacklevel=2)
            notes.append(msg)
    return GeneratorMatrix(grid, diag, off, lg, lgm, kap, notes)


def langevin_potential(target: TargetSpec, drift: DriftSpec) -> DriftSpec:
    """Drift potential ``U - A`` of the Q-process (its reversing density is ``pi^2 / gamma``)."""
    U, A = target.log_density, drift.potential
    field_ = ScalarField(
        U.dim,
        lambda y: U.eval(y) - A.eval(y),
        lambda y: U.grad(y) - A.grad(y),
        lambda y: U.laplacian(y) - A.laplacian(y),
        "U-A",
    )
    return DriftSpec(field_)


def discretize_langevin_generator(target: TargetSpec, drift: DriftSpec, grid: GridSpec) -> GeneratorMatrix:
    """The unkilled Q-process generator, discretised in its own ``pi^2/gamma``-weighted form."""
    m = discretize_generator(None, langevin_potential(target, drift), None, grid)
    dens = m.log_gamma - m.log_gamma.max()
    if max(dens[0], dens[-1]) > math.log(PHI_DECAY):
        msg = "grid too narrow: pi^2/gamma has not decayed at the boundary"
        warnings.warn(msg, stacklevel=2)
        m.warnings.append(msg)
    return m


def low_eigenvalues(m: GeneratorMatrix, k: int, return_vector: bool = False):
    """The ``k`` smallest eigenvalues (ascending) by Sturm-sequence bisection.

    With ``return_vector`` the ground-state eigenvector is returned as well,
    in the unsymmetrised (function) coordinates, scaled to unit Gamma-norm
    and signed to be mostly positive.

    Raises:
        NumericError: an eigenpair residual exceeds 1e-10 of the matrix scale.
    """
    n = len(m.diag)
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must be in [1, {n}]")
    try:
        w, v = eigh_tridiagonal(m.diag, m.offdiag, select="i", select_range=(0, k - 1))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"tridiagonal eigen-solve failed: {exc}") from None
    lo, hi = m.gershgorin()
    scale = max(1.0, abs(lo), abs(hi))
    sv = m.diag[:, None] * v
    sv[:-1] += m.offdiag[:, None] * v[1:]
    sv[1:] += m.offdiag[:, None] * v[:-1]
    resid = float(np.max(np.abs(sv - v * w)))
    if resid > EIG_RESIDUAL * scale:
        raise NumericError(f"eigen residual {resid:.3e} exceeds {EIG_RESIDUAL:g} x scale {scale:.3e}")
    if not return_vector:
        return w
    g = v[:, 0] * np.sign(v[:, 0].sum())
    f = m.from_symmetric(g)
    f /= math.sqrt(np.sum(f**2 * np.exp(m.log_gamma - m.log_gamma.max())) * m.h)
    return w, f


def ground_state_on_grid(target: TargetSpec, drift: DriftSpec, grid: GridSpec) -> np.ndarray:
    """``phi = exp(U - 2A)`` at the nodes, unit norm in the (max-rescaled) Gamma-weighted grid inner product."""
    x = grid.points[:, None]
    lg = 2.0 * drift.potential.eval(x)
    log_phi = target.log_density.eval(x) - lg
    lw = lg - lg.max()
    log_norm2 = np.log(np.sum(np.exp(2 * log_phi + lw - (2 * log_phi + lw).max())) * grid.h) + (2 * log_phi + lw).max()
    return np.exp(log_phi - 0.5 * log_norm2)


def eigenfunction_residual(
    target: TargetSpec, drift: DriftSpec, killing: KillingSpec, grid: GridSpec, boundary_layers: int = 5
) -> float:
    """``max_i |(M phi)_i - K phi_i| / max_i |phi_i|`` away from the boundary."""
    m = discretize_generator(target, drift, killing, grid)
    phi = ground_state_on_grid(target, drift, grid)
    r = m.apply(phi) - killing.shift_K * phi
    inner = slice(boundary_layers, len(phi) - boundary_layers)
    return float(np.max(np.abs(r[inner])) / np.max(np.abs(phi)))


def semigroup_invariance_error(m: GeneratorMatrix, phi: np.ndarray, K: float, h: float = 0.1) -> float:
    """Relative Gamma-L2 error of ``e^{hK} exp(-h M) phi`` against ``phi``."""
    w, v = eigh_tridiagonal(m.diag, m.offdiag)
    s = m.to_symmetric(phi)
    evolved = v @ (np.exp(-h * (w - K)) * (v.T @ s))
    return float(np.linalg.norm(evolved - s) / np.linalg.norm(s))


def qsd_error_bound(
    psi,
    target: TargetSpec,
    drift: DriftSpec,
    killing: KillingSpec | None,
    gap: float | None,
    t: float,
    grid: GridSpec,
) -> float:
    """``C' exp(-t gap)``, bounding ``|P_psi(X_t in E | tau > t) - pi(E)|`` for every ``E``.

    ``psi`` is an initial density with respect to ``Gamma`` (array on the
    grid nodes or a callable of the points); it is rescaled to unit
    Gamma-mass.  ``pi`` is rescaled so that ``int pi^2 / gamma = 1``, the
    normalisation under which the constant is valid.  With ``gap=None`` the
    gap is taken from the discretised generator.

    Raises:
        InapplicableBoundError: ``gamma`` has not decayed at the grid ends,
            i.e. ``Gamma(R)`` looks infinite.
    """
    x = grid.points[:, None]
    h = grid.h
    lg = 2.0 * drift.potential.eval(x)
    if max(lg[0], lg[-1]) - lg.max() > math.log(1e-8):
        raise InapplicableBoundError("Gamma(R) appears infinite on this grid; the bound needs a finite reversing measure")
    gamma = np.exp(lg)
    gamma_mass = float(np.sum(gamma) * h)
    p = np.asarray(psi(grid.points) if callable(psi) else psi, dtype=float)
    if p.shape != (grid.n,) or np.any(p < 0):
        raise ConfigurationError("psi must be a non-negative array on the grid nodes")
    p = p / (np.sum(p * gamma) * h)
    u = target.log_density.eval(x)
    log_l2 = 2 * u - lg
    shift = log_l2.max()
    pi = np.exp(u - 0.5 * shift) / math.sqrt(np.sum(np.exp(log_l2 - shift)) * h)
    if gap is None:
        if killing is None:
            raise ConfigurationError("need a killing rate to compute the gap")
        w = low_eigenvalues(discretize_generator(target, drift, killing, grid), 2)
        gap = float(w[1] - w[0])
    c_prime = 2.0 * math.sqrt(np.sum(p**2 * gamma) * h) * math.sqrt(gamma_mass) / (np.sum(p * pi) * h * np.sum(pi) * h)
    return float(c_prime * math.exp(-t * gap))


def analytic_eigenvalues(target: TargetSpec, drift: DriftSpec, k: int) -> np.ndarray | None:
    """Closed-form killed-generator eigenvalues for the OU example and 1-d Gaussian under Brownian motion."""
    if target.dim != 1 or target.mean is None:
        return None
    s2 = float(target.var[0])
    if drift.ou is not None:
        nu, tau2 = drift.ou
        p = OUParams(nu, tau2, float(target.mean[0]), s2)
        K, _, _ = ou_killing_constants(p)
        lam, _ = ou_spectrum(p, k - 1)
        return K + lam
    if drift.zero:
        return 1.0 / (2 * s2) + np.arange(k) / s2
    return None


def with_shift(killing: KillingSpec, shift: float) -> KillingSpec:
    return replace(killing, shift_K=float(shift))
