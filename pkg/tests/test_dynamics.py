import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qsmc import rng
from qsmc.dynamics import (
    PathGrid,
    SchemeConfig,
    bm_exact_step,
    euler_step,
    langevin_drift,
    long_run_moments,
    ou_exact_step,
    simulate_path,
    simulate_paths,
    time_grid,
)
from qsmc.errors import ConfigurationError, FieldEvaluationError
from qsmc.model import DriftFunction, DriftSpec, ScalarField, TargetSpec, gaussian_model, ou_example_model


def zero_drift(x):
    return np.zeros_like(x)


def test_euler_examples(ou):
    _, drift, _ = ou
    assert euler_step(zero_drift, np.array([1.5]), 0.3, np.zeros(1))[0] == 1.5
    assert euler_step(zero_drift, np.array([1.5]), 1.0, np.array([0.7]))[0] == pytest.approx(2.2)
    assert euler_step(drift.drift_at, np.array([[3.0]]), 0.01, np.zeros((1, 1)))[0, 0] == pytest.approx(2.99875, abs=1e-15)


@settings(max_examples=50)
@given(st.floats(-5, 5), st.floats(1e-4, 1.0), st.floats(-3, 3), st.floats(-4, 4))
def test_euler_affine_in_noise(x, dt, a, z):
    def drift(v):
        return np.sin(v)

    base = euler_step(drift, np.array([x]), dt, np.zeros(1))
    moved = euler_step(drift, np.array([x]), dt, np.array([a * z]))
    assert moved[0] - base[0] == pytest.approx(math.sqrt(dt) * a * z, abs=1e-12)


def test_euler_rejects_nonfinite_drift():
    with pytest.raises(FieldEvaluationError):
        euler_step(lambda v: v * np.nan, np.array([1.0]), 0.1, np.zeros(1))


def test_ou_exact_examples():
    assert ou_exact_step(2.0, 4.0, 3.0, 8.0, 0.0) == pytest.approx(2.0 + math.exp(-1.0))
    assert ou_exact_step(2.0, 4.0, 3.0, 0.0, 1.3) == 3.0
    assert ou_exact_step(2.0, 4.0, 3.0, 1e6, 1.0) == pytest.approx(4.0)


def test_ou_exact_moments():
    z = rng.normals(rng.stream_keys(5, np.arange(100_000), rng.PATH), [0])[:, 0]
    nu, tau2, x, dt = 2.0, 4.0, 3.0, 1.7
    out = ou_exact_step(nu, tau2, x, dt, z)
    mean = nu + (x - nu) * math.exp(-dt / (2 * tau2))
    var = tau2 * (1 - math.exp(-dt / tau2))
    se_mean = math.sqrt(var / len(z))
    se_var = var * math.sqrt(2 / (len(z) - 1))
    assert abs(out.mean() - mean) < 4 * se_mean
    assert abs(out.var(ddof=1) - var) < 4 * se_var


def test_time_grid_truncates_final_step():
    g = time_grid(0.35, 0.1)
    np.testing.assert_allclose(g, [0, 0.1, 0.2, 0.3, 0.35])
    assert len(time_grid(0.03, 0.01)) == 4


def test_path_grid_validation():
    with pytest.raises(ValueError):
        PathGrid(np.array([0.0, 0.0]), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        PathGrid(np.array([0.0, 1.0]), np.zeros((3, 1)))


def test_scheme_config_validation():
    with pytest.raises(ConfigurationError):
        SchemeConfig(dt=0.0)
    with pytest.raises(ConfigurationError):
        SchemeConfig(scheme="milstein")


def test_simulate_path_deterministic(ou):
    _, drift, _ = ou
    cfg = SchemeConfig(0.01)
    a = simulate_path(drift.drift_at, 3.0, 1.0, cfg, rng.RngStream(9, 4))
    b = simulate_path(drift.drift_at, 3.0, 1.0, cfg, rng.RngStream(9, 4))
    c = simulate_path(drift.drift_at, 3.0, 1.0, cfg, rng.RngStream(9, 5))
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)
    assert len(simulate_path(drift.drift_at, 0.0, 0.03, cfg, rng.RngStream(1)).times) == 4


def test_batch_matches_single_paths(ou):
    _, drift, _ = ou
    cfg = SchemeConfig(0.05)
    batch = simulate_paths(drift.drift_at, np.full(4, 3.0), 1.0, cfg, seed=2)
    one = simulate_path(drift.drift_at, 3.0, 1.0, cfg, rng.RngStream(2, 3))
    np.testing.assert_array_equal(batch.states[:, 3, :], one.states)


def test_exact_scheme_requires_matching_drift():
    with pytest.raises(ConfigurationError):
        simulate_path(zero_drift, 0.0, 1.0, SchemeConfig(0.1, "exact_ou"), rng.RngStream(0))
    with pytest.raises(ConfigurationError):
        simulate_path(DriftSpec.brownian(2).drift_at, [0.0, 0.0], 1.0, SchemeConfig(0.1, "exact_ou"), rng.RngStream(0))
    with pytest.raises(ConfigurationError):
        _, d = ou_example_model()
        simulate_path(d.drift_at, 0.0, 1.0, SchemeConfig(0.1, "exact_bm"), rng.RngStream(0))


def test_exact_ou_and_euler_agree_in_law(ou):
    _, drift, _ = ou
    n = 10_000
    x0 = np.full(n, 3.0)
    exact = simulate_paths(drift.drift_at, x0, 1.0, SchemeConfig(1e-4 * 1000, "exact_ou"), seed=1).states[-1, :, 0]
    euler = simulate_paths(drift.drift_at, x0, 1.0, SchemeConfig(1e-4 * 10), seed=2).states[-1, :, 0]
    assert stats.ks_2samp(exact, euler).statistic < 0.02


def test_bridge_refinement_preserves_coarse_brownian_path():
    cfg0 = SchemeConfig(0.1, "exact_bm")
    drift = DriftSpec.brownian(2).drift_at
    coarse = simulate_paths(drift, np.zeros((3, 2)), 1.0, cfg0, seed=4)
    for levels in (1, 3):
        fine = simulate_paths(drift, np.zeros((3, 2)), 1.0, SchemeConfig(0.1, "exact_bm", levels), seed=4)
        np.testing.assert_allclose(fine.states[:: 1 << levels], coarse.states, atol=1e-12)
        np.testing.assert_allclose(fine.times[:: 1 << levels], coarse.times, atol=1e-12)


def test_bridge_increments_are_standard():
    cfg = SchemeConfig(1.0, "exact_bm", 2)
    p = simulate_paths(DriftSpec.brownian(1).drift_at, np.zeros(20_000), 1.0, cfg, seed=6)
    inc = np.diff(p.states[:, :, 0], axis=0) / math.sqrt(0.25)
    for row in inc:
        assert stats.kstest(row, "norm").pvalue > 1e-4
    assert abs(np.corrcoef(inc[0], inc[1])[0, 1]) < 0.04


def test_langevin_drift_examples(ou):
    target, drift, _ = ou
    f = langevin_drift(target, drift)
    ys = np.linspace(-5, 5, 11)[:, None]
    np.testing.assert_allclose(f(ys), -(3 / 8) * (ys + 2), atol=1e-14)
    # exact-OU hint: centre -2, drift (centre - x)/(2 * 4/3)
    assert f.ou == pytest.approx((-2.0, 4 / 3))

    A = ScalarField.quadratic(1.0, 4.0)
    U = ScalarField(1, lambda p: 2 * A.eval(p), lambda p: 2 * A.grad(p), lambda p: 2 * A.laplacian(p))
    np.testing.assert_allclose(langevin_drift(TargetSpec(U), DriftSpec(A))(ys), A.grad(ys))

    g, gd = gaussian_model(0.5, 2.0)
    np.testing.assert_allclose(langevin_drift(g, gd)(ys), g.log_density.grad(ys))


def test_long_run_moments_exact_scheme(ou):
    target, drift, _ = ou
    f = langevin_drift(target, drift)
    res = long_run_moments(f, np.full(200, -2.0), 200.0, SchemeConfig(0.5, "exact_ou"), seed=3)
    assert abs(res.mean[0] + 2.0) < 4 * res.se_mean[0]
    assert res.var[0] == pytest.approx(4 / 3, rel=0.03)


def test_bm_exact_step():
    assert bm_exact_step(np.array([1.0]), 4.0, np.array([0.5]))[0] == 2.0
