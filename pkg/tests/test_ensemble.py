import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from qsmc import rng
from qsmc.ensemble import (
    ConditionalLaw,
    EnsembleConfig,
    ModelBundle,
    fit_exp_rate,
    histogram,
    initial_states,
    ks_statistic,
    mean_decay_fit,
    run_ensemble,
    summarize,
    survival_rate_fit,
)
from qsmc.errors import ConfigurationError, EmptySampleError, WindowError
from qsmc.model import DriftSpec, KillingSpec, gaussian_model


def unkilled_bm():
    target, drift = gaussian_model(0.0, 1.0)
    return ModelBundle(target, drift, KillingSpec.constant(0.0))


def test_ks_examples():
    n = 40
    q = (np.arange(1, n + 1) - 0.5) / n
    assert ks_statistic(stats.norm.ppf(q), stats.norm.cdf) == pytest.approx(1 / (2 * n))
    assert ks_statistic(np.zeros(10), stats.norm.cdf) == pytest.approx(0.5)
    with pytest.raises(EmptySampleError):
        ks_statistic([], stats.norm.cdf)


def test_ks_matches_scipy():
    x = rng.normals(rng.stream_keys(1, [0], rng.ORACLE), np.arange(10_000))[0]
    d = ks_statistic(x, stats.norm.cdf)
    assert d == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-15)
    assert d < 0.025


def test_fit_exp_rate_examples():
    t = np.linspace(0, 3, 31)
    fit = fit_exp_rate(t, np.exp(-2 * t + 0.3), (0, 3))
    assert fit.slope == pytest.approx(-2.0) and fit.intercept == pytest.approx(0.3)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(WindowError):
        fit_exp_rate(t, np.exp(-t), (0.0, 0.15))
    v = np.exp(-t)
    v[5] = 0.0
    with pytest.raises(WindowError):
        fit_exp_rate(t, v, (0, 3))


def test_summarize_examples():
    s = summarize(np.array([-1.0, 1.0]))
    assert s.mean[0] == 0.0 and s.var[0] == 2.0
    with pytest.raises(EmptySampleError):
        summarize(np.array([1.0]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=30))
def test_jackknife_matches_explicit_loop(xs):
    x = np.array(xs)
    s = summarize(x)
    n = len(x)
    loo = np.array([np.var(np.delete(x, i), ddof=1) for i in range(n)])
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    assert s.se_var[0] == pytest.approx(se, rel=1e-7, abs=1e-9)
    assert s.se_mean[0] == pytest.approx(np.std(x, ddof=1) / math.sqrt(n), rel=1e-9, abs=1e-12)


def test_histogram_density_integrates_to_one():
    x = rng.normals(rng.stream_keys(2, [0], rng.ORACLE), np.arange(5000))[0][:, None]
    edges, counts = histogram(x)
    law = ConditionalLaw(1.0, x, len(x), edges, counts)
    assert np.sum(law.density * np.diff(edges)) == pytest.approx(1.0)
    assert counts.sum() == 5000


def test_unkilled_brownian_law():
    cfg = EnsembleConfig(20_000, 1.0, [1.0], dt=0.01, seed=3, scheme="exact_bm")
    res = run_ensemble(unkilled_bm(), cfg)
    law = res.law_at(1.0)
    assert law.n_survivors == 20_000
    assert ks_statistic(law.survivor_states[:, 0], stats.norm.cdf) < 0.02
    np.testing.assert_array_equal(res.survival.survival, 1.0)


def test_worker_and_chunk_invariance(ou):
    target, drift, killing = ou
    b = ModelBundle(target, drift, killing)
    base = dict(replicas=5000, horizon=3.0, checkpoints=[1.0, 3.0], dt=0.02, seed=9, x0=3.0)
    r1 = run_ensemble(b, EnsembleConfig(**base))
    r2 = run_ensemble(b, EnsembleConfig(**base, chunk_size=777, workers=4))
    for a, c in zip(r1.laws, r2.laws):
        np.testing.assert_array_equal(a.survivor_states, c.survivor_states)
        np.testing.assert_array_equal(a.counts, c.counts)
    np.testing.assert_array_equal(r1.survival.survival, r2.survival.survival)
    np.testing.assert_allclose(r1.trace_mean, r2.trace_mean, rtol=1e-12, equal_nan=True)


def test_substream_permutation_invariance(ou):
    target, drift, killing = ou
    b = ModelBundle(target, drift, killing)
    subs = np.arange(3000)
    perm = np.random.default_rng(0).permutation(subs)
    base = dict(replicas=3000, horizon=2.0, checkpoints=[2.0], dt=0.02, seed=1, x0=3.0)
    r1 = run_ensemble(b, EnsembleConfig(**base, substreams=tuple(subs)))
    r2 = run_ensemble(b, EnsembleConfig(**base, substreams=tuple(perm)))
    s1, s2 = summarize(r1.laws[0]), summarize(r2.laws[0])
    assert r1.laws[0].n_survivors == r2.laws[0].n_survivors
    assert s1.mean[0] == pytest.approx(s2.mean[0], rel=1e-12)
    assert s1.var[0] == pytest.approx(s2.var[0], rel=1e-10)
    np.testing.assert_array_equal(np.sort(r1.laws[0].survivor_states[:, 0]), np.sort(r2.laws[0].survivor_states[:, 0]))


def test_survival_monotone_and_bounded():
    target, drift = gaussian_model(0.0, 1.0)
    c = 0.7
    b = ModelBundle(target, drift, KillingSpec.constant(c))
    res = run_ensemble(b, EnsembleConfig(20_000, 3.0, [3.0], dt=0.01, seed=2, scheme="exact_bm"))
    s = res.survival
    assert np.all(np.diff(s.survival) <= 0)
    assert np.all(s.survival <= np.exp(-c * s.times) + 4 * s.stderr + 1e-12)


def test_doubling_replicas_shrinks_stderr_by_root_two(ou):
    target, drift, killing = ou
    b = ModelBundle(target, drift, killing)
    r1 = run_ensemble(b, EnsembleConfig(20_000, 2.0, [2.0], dt=0.02, seed=4, x0=3.0))
    r2 = run_ensemble(b, EnsembleConfig(40_000, 2.0, [2.0], dt=0.02, seed=4, x0=3.0))
    ratio = r1.survival.stderr[-1] / r2.survival.stderr[-1]
    assert ratio == pytest.approx(math.sqrt(2), rel=0.2)


def test_empty_checkpoint_is_flagged_not_fatal():
    target, drift = gaussian_model(0.0, 1.0)
    b = ModelBundle(target, drift, KillingSpec.constant(50.0))
    res = run_ensemble(b, EnsembleConfig(200, 2.0, [1.0, 2.0], dt=0.01, seed=0, scheme="exact_bm"))
    assert res.law_at(2.0).empty and res.law_at(2.0).n_survivors == 0
    assert np.all(res.law_at(2.0).density == 0)


def test_initial_samplers():
    target, _ = gaussian_model(-1.0, 2.0)
    x = initial_states("target", target, 5, np.arange(50_000))
    assert x.mean() == pytest.approx(-1.0, abs=0.03)
    assert x.var() == pytest.approx(2.0, rel=0.03)
    y = initial_states({"sampler": "normal", "mean": 3.0, "var": 0.25}, target, 5, np.arange(50_000))
    assert y.std() == pytest.approx(0.5, rel=0.03)
    np.testing.assert_array_equal(initial_states(0.5, target, 0, np.arange(3)), 0.5)
    with pytest.raises(ConfigurationError):
        initial_states({"sampler": "cauchy"}, target, 0, np.arange(3))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        EnsembleConfig(10, 1.0, [0.5, 0.2])
    with pytest.raises(ConfigurationError):
        EnsembleConfig(10, 1.0, [2.0])
    with pytest.raises(ConfigurationError):
        EnsembleConfig(10, 1.0, [0.123], dt=0.01)
    with pytest.raises(ConfigurationError):
        EnsembleConfig(0, 1.0, [])


@pytest.mark.slow
def test_gaussian_bm_quasi_limit():
    target, drift = gaussian_model(0.0, 1.0)
    from qsmc.model import build_killing

    b = ModelBundle(target, drift, build_killing(target, drift))
    res = run_ensemble(b, EnsembleConfig(200_000, 10.0, [10.0], dt=0.01, seed=7, scheme="exact_bm"))
    s = summarize(res.law_at(10.0))
    assert abs(s.mean[0]) < 0.1
    assert abs(s.var[0] - 1.0) < 0.15


@pytest.mark.slow
def test_ou_rate_fits(ou):
    target, drift, killing = ou
    b = ModelBundle(target, drift, killing)
    res = run_ensemble(b, EnsembleConfig(500_000, 20.0, [20.0], dt=0.01, seed=20240501, x0=3.0))
    fit = survival_rate_fit(res, (10.0, 20.0))
    assert fit.slope == pytest.approx(-17 / 64, abs=0.03)
    mfit = mean_decay_fit(res, -1.0, (2.0, 10.0))
    assert mfit.slope == pytest.approx(-3 / 8, rel=0.3)
