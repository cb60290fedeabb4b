import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qsmc import rng


def test_reproducible_and_counter_addressable():
    keys = rng.stream_keys(42, np.arange(5), rng.PATH)
    a = rng.normals(keys, np.arange(100))
    b = rng.normals(keys, np.arange(100))
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(rng.normals(keys, np.arange(50, 60)), a[:, 50:60])
    np.testing.assert_array_equal(rng.normals(keys[2:3], np.arange(100)), a[2:3])


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**40))
def test_uniforms_in_open_interval(seed, sub):
    u = rng.uniforms(rng.stream_keys(seed, [sub], rng.KILL), np.arange(64))
    assert np.all((u > 0) & (u < 1))


def test_streams_and_purposes_differ():
    k1 = rng.stream_keys(1, [0, 1], rng.PATH)
    k2 = rng.stream_keys(1, [0, 1], rng.KILL)
    k3 = rng.stream_keys(2, [0, 1], rng.PATH)
    assert len({int(k) for k in np.concatenate([k1, k2, k3])}) == 6


def test_normals_distribution():
    z = rng.normals(rng.stream_keys(7, np.arange(200), rng.PATH), np.arange(500)).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3
    assert abs(z.mean()) < 4 / np.sqrt(z.size)


def test_exponentials_distribution():
    e = rng.exponentials(rng.stream_keys(9, np.arange(20000), rng.KILL), [0])[:, 0]
    assert stats.kstest(e, "expon").pvalue > 1e-3


def test_neighbouring_substreams_uncorrelated():
    z = rng.normals(rng.stream_keys(3, np.arange(2), rng.PATH), np.arange(50000))
    assert abs(np.corrcoef(z)[0, 1]) < 4 / np.sqrt(50000)


def test_rng_stream_object():
    s = rng.RngStream(11, 4)
    np.testing.assert_array_equal(s.normals(rng.PATH, np.arange(3)), rng.normals(s.key(rng.PATH), np.arange(3)).ravel())
    assert s.exponential() == s.exponential()
    with pytest.raises(ValueError):
        rng.RngStream(-1, 0)
