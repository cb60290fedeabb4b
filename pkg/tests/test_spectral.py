import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsmc.errors import InapplicableBoundError, NumericError, ParameterError
from qsmc.model import DriftSpec, KillingSpec, ScalarField, TargetSpec, build_killing, find_shift_K, gaussian_model, ou_example_model
from qsmc.spectral import (
    GeneratorMatrix,
    GridSpec,
    OUParams,
    analytic_eigenvalues,
    discretize_generator,
    discretize_langevin_generator,
    eigenfunction_residual,
    ground_state_on_grid,
    low_eigenvalues,
    ou_killing_constants,
    ou_qprocess,
    ou_spectrum,
    qsd_error_bound,
    semigroup_invariance_error,
    with_shift,
)

OU_GRID = GridSpec(-20.0, 15.0, 2000)
P = OUParams()


def test_ou_constants():
    K, ys, c = ou_killing_constants(P)
    assert K == pytest.approx(17 / 64) and ys == pytest.approx(-2.5) and c == pytest.approx(1 / 16)
    K2, y2, _ = ou_killing_constants(OUParams(1.0, 5.0, 1.0, 2.0))
    assert K2 == pytest.approx(3 / 20) and y2 == pytest.approx(1.0)
    K3, _, _ = ou_killing_constants(OUParams(0.0, 1e12, 0.0, 2.0))
    assert K3 == pytest.approx(1 / 4, rel=1e-9)


@settings(max_examples=40)
@given(st.floats(-3, 3), st.floats(1.1, 10), st.floats(-3, 3), st.floats(0.2, 1.0))
def test_ou_constants_match_grid_minimisation(nu, ratio, mu, s2):
    tau2 = s2 * ratio
    target, drift = ou_example_model(nu, tau2, mu, s2)
    from qsmc.model import _kappa_tilde_log_raw

    K, ys, _ = ou_killing_constants(OUParams(nu, tau2, mu, s2))
    Kg, yg = find_shift_K(_kappa_tilde_log_raw(target, drift), [(-200, 200)], tol=1e-12, grid_points=2001)
    assert Kg == pytest.approx(K, rel=1e-7, abs=1e-9)


def test_ou_parameter_check():
    with pytest.raises(ParameterError, match="tails"):
        OUParams(tau2=2.0, sigma2=2.0)


def test_qprocess_examples():
    assert ou_qprocess(P) == pytest.approx((-2.0, 4 / 3))
    assert ou_qprocess(OUParams(1.5, 4.0, 1.5, 2.0))[0] == pytest.approx(1.5)
    m, v = ou_qprocess(OUParams(0.0, 1e12, 0.7, 2.0))
    assert m == pytest.approx(0.7) and v == pytest.approx(1.0)


def test_spectrum_formula():
    lam, gap = ou_spectrum(P, 4)
    np.testing.assert_allclose(lam, 3 * np.arange(5) / 8)
    assert gap == pytest.approx(3 / 8) and lam[0] == 0
    _, g2 = ou_spectrum(OUParams(0.0, 4.0, 0.0, 3.999999), 1)
    assert g2 == pytest.approx(1 / 8, rel=1e-5)


def test_two_by_two():
    np.testing.assert_allclose(low_eigenvalues(GeneratorMatrix.from_bands([2.0, 2.0], [1.0]), 2), [1.0, 3.0])


def test_dirichlet_laplacian():
    grid = GridSpec(0.0, 1.0, 400)
    m = discretize_generator(None, DriftSpec.brownian(1), None, grid)
    lam = low_eigenvalues(m, 1)[0]
    assert lam == pytest.approx(math.pi**2 / 2, rel=1e-4)


def test_ou_eigenvalues(ou):
    target, drift, killing = ou
    m = discretize_generator(target, drift, killing, OU_GRID)
    lam = low_eigenvalues(m, 4)
    expected = 17 / 64 + 3 * np.arange(4) / 8
    assert abs(lam[0] - 17 / 64) < 0.005
    np.testing.assert_allclose(lam, expected, rtol=0.01)
    np.testing.assert_allclose(analytic_eigenvalues(target, drift, 4), expected)
    assert not m.warnings


def test_gaussian_brownian_eigenvalues():
    target, drift = gaussian_model(0.0, 2.0)
    k = build_killing(target, drift)
    lam = low_eigenvalues(discretize_generator(target, drift, k, GridSpec(-15, 15, 2000)), 4)
    np.testing.assert_allclose(lam, 0.25 + np.arange(4) / 2, rtol=0.01)
    assert lam[1] - lam[0] == pytest.approx(0.5, rel=0.01)


def test_langevin_spectrum_translates(ou):
    target, drift, killing = ou
    lk = low_eigenvalues(discretize_generator(target, drift, with_shift(killing, 0.0), OU_GRID), 4)
    lz = low_eigenvalues(discretize_langevin_generator(target, drift, OU_GRID), 4)
    np.testing.assert_allclose(lz, 3 * np.arange(4) / 8, atol=1e-4)
    # the unshifted killed generator and the Q-process generator share a spectrum
    np.testing.assert_allclose(lz, lk, rtol=0.01, atol=1e-5)
    full = low_eigenvalues(discretize_generator(target, drift, killing, OU_GRID), 4)
    np.testing.assert_allclose(lz + killing.shift_K, full, rtol=0.01)


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_constant_shift(ou, c):
    target, drift, killing = ou
    a = low_eigenvalues(discretize_generator(target, drift, killing, OU_GRID), 4)
    b = low_eigenvalues(discretize_generator(target, drift, with_shift(killing, killing.shift_K + c), OU_GRID), 4)
    np.testing.assert_allclose(b - a, c, atol=1e-9)


def test_gamma_symmetry(ou):
    target, drift, killing = ou
    m = discretize_generator(target, drift, killing, OU_GRID)
    assert m.gamma_symmetry_error() < 1e-12
    lo, hi = m.gershgorin()
    assert math.isfinite(lo) and math.isfinite(hi)
    # the symmetrised matrix equals Gamma^{1/2} L Gamma^{-1/2}
    lower, diag, upper = m.bands()
    s = np.exp(0.5 * m.log_gamma)
    np.testing.assert_allclose(upper * s[:-1] / s[1:], m.offdiag, rtol=1e-10)
    np.testing.assert_allclose(lower * s[1:] / s[:-1], m.offdiag, rtol=1e-10)


def test_ground_vector_matches_phi(ou, ou_phi):
    target, drift, killing = ou
    m = discretize_generator(target, drift, killing, OU_GRID)
    _, f = low_eigenvalues(m, 1, return_vector=True)
    phi = ground_state_on_grid(target, drift, OU_GRID)
    w = np.exp(m.log_gamma - m.log_gamma.max())
    err = math.sqrt(np.sum((f - phi) ** 2 * w) / np.sum(phi**2 * w))
    assert err < 1e-3
    ratio = ou_phi(OU_GRID.points) / phi
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-9)


def test_eigenfunction_residual(ou):
    target, drift, killing = ou
    r1 = eigenfunction_residual(target, drift, killing, OU_GRID)
    r2 = eigenfunction_residual(target, drift, killing, OU_GRID.refined())
    assert r1 < 1e-4
    assert r1 / r2 == pytest.approx(4.0, rel=0.1)


def test_residual_vanishes_on_constants():
    A = ScalarField.quadratic(0.0, 2.0)
    U = ScalarField(1, lambda p: 2 * A.eval(p), lambda p: 2 * A.grad(p), lambda p: 2 * A.laplacian(p))
    target, drift = TargetSpec(U), DriftSpec(A)
    with pytest.warns(UserWarning, match="no killing"):
        k = build_killing(target, drift)
    # phi is constant, so it cannot decay at the ends
    with pytest.warns(UserWarning, match="grid too narrow"):
        m = discretize_generator(target, drift, k, GridSpec(-10, 10, 300))
        res = eigenfunction_residual(target, drift, k, GridSpec(-10, 10, 300))
    r = m.apply(np.ones(300))
    assert np.all(r[1:-1] == 0.0)
    assert res == 0.0


def test_semigroup_invariance(ou):
    target, drift, killing = ou
    m = discretize_generator(target, drift, killing, OU_GRID)
    phi = ground_state_on_grid(target, drift, OU_GRID)
    assert semigroup_invariance_error(m, phi, killing.shift_K, 0.1) < 1e-3


def test_narrow_grid_warns(ou):
    target, drift, killing = ou
    with pytest.warns(UserWarning, match="grid too narrow"):
        m = discretize_generator(target, drift, killing, GridSpec(-4, 2, 200))
    assert m.warnings


def test_residual_certification_raises():
    m = GeneratorMatrix.from_bands([1.0, 2.0, 3.0], [0.5, 0.5])
    import qsmc.spectral as spectral

    old = spectral.EIG_RESIDUAL
    spectral.EIG_RESIDUAL = 0.0
    try:
        with pytest.raises(NumericError):
            low_eigenvalues(m, 2)
    finally:
        spectral.EIG_RESIDUAL = old


def gaussian_integral(a, b, c):
    """int exp(-a y^2 + b y + c) dy."""
    return math.sqrt(math.pi / a) * math.exp(b * b / (4 * a) + c)


def test_bound_constant_closed_form(ou):
    target, drift, killing = ou
    from scipy.stats import norm

    psi = norm.pdf(OU_GRID.points, 3.0, 0.5) * np.exp((OU_GRID.points - 2.0) ** 2 / 8.0)
    got = qsd_error_bound(psi, target, drift, killing, 3 / 8, 0.0, OU_GRID)
    # closed form, all exponents quadratic in y
    gamma_mass = math.sqrt(2 * math.pi * 4.0)
    l2 = gaussian_integral(0.5 - 0.125, -1.0 - 0.5, -0.5 + 0.5)  # int pi^2/gamma, pi = exp(-(y+1)^2/4)
    c = 1 / math.sqrt(l2)
    z = 1 / math.sqrt(2 * math.pi * 0.25)
    # int psi^2 gamma = z^2 int exp(-4(y-3)^2 + (y-2)^2/8)
    psi2 = z * z * gaussian_integral(4 - 0.125, 24 - 0.5, -36 + 0.5)
    # int psi pi = z int exp(-2(y-3)^2 + (y-2)^2/8 - (y+1)^2/4)
    psipi = c * z * gaussian_integral(2 - 0.125 + 0.25, 12 - 0.5 - 0.5, -18 + 0.5 - 0.25)
    pimass = c * math.sqrt(4 * math.pi)
    expected = 2 * math.sqrt(psi2) * math.sqrt(gamma_mass) / (psipi * pimass)
    assert got == pytest.approx(expected, rel=1e-6)
    assert qsd_error_bound(psi, target, drift, killing, 3 / 8, 4.0, OU_GRID) == pytest.approx(expected * math.exp(-1.5), rel=1e-6)


def test_bound_from_ground_state_is_at_least_two(ou):
    target, drift, killing = ou
    phi = ground_state_on_grid(target, drift, OU_GRID)
    b0 = qsd_error_bound(phi, target, drift, killing, None, 0.0, OU_GRID)
    assert b0 >= 2.0
    assert qsd_error_bound(phi, target, drift, killing, None, 10.0, OU_GRID) > 0


def test_bound_needs_finite_gamma_mass():
    target, drift = gaussian_model(0.0, 1.0)
    k = build_killing(target, drift)
    with pytest.raises(InapplicableBoundError):
        qsd_error_bound(np.ones(100), target, drift, k, 1.0, 1.0, GridSpec(-10, 10, 100))
