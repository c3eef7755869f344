import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdelab import rng
from spdelab.noise_model import (
    CovarianceSpectrum,
    eigenfunction_condition_check,
    eigenfunction_values,
    holder_norm_bound,
    mu,
    noise_on_grid,
    sample_increment,
    trace,
)
from spdelab.spectral_space import grid_nodes

COS2 = CovarianceSpectrum("cosine", rho=2.0)
COM2 = CovarianceSpectrum("commutative", rho=2.0)


def test_mu_values():
    assert mu(COS2, 0) == 0.0
    assert mu(COS2, 3) == pytest.approx(1 / 9)
    assert mu(CovarianceSpectrum("commutative", nu=2, rho=3, d=2), (1, 2)) == pytest.approx(2 / 27)
    with pytest.raises(ValueError):
        mu(COM2, 0)
    with pytest.raises(ValueError):
        mu(CovarianceSpectrum("cosine", n_noise=4), 5)


def test_trace_closed_forms():
    rep = trace(COS2, 1000)
    assert rep.full == pytest.approx(math.pi**2 / 6)
    assert rep.trace_class
    assert rep.truncated <= rep.full <= rep.truncated + rep.tail_bound
    # commutative d = 2: sum_{n>=2} (n-1) n^-3 = zeta(2) - zeta(3)
    rep2 = trace(CovarianceSpectrum("commutative", rho=3.0, d=2), 200)
    assert rep2.full == pytest.approx(math.pi**2 / 6 - 1.2020569031595942)
    assert rep2.truncated < rep2.full


def test_rough_spectrum_not_trace_class():
    rep = trace(CovarianceSpectrum("cosine", rho=0.5), 100)
    assert not rep.trace_class
    assert math.isinf(rep.tail_bound)
    assert not CovarianceSpectrum("commutative", rho=2.0, d=2).trace_class


def test_custom_spectrum():
    spec = CovarianceSpectrum("custom", mu_values=(1.0, 0.5), basis="sine")
    assert spec.eigenbasis == "sine"
    assert trace(spec).full == pytest.approx(1.5)
    with pytest.raises(ValueError):
        CovarianceSpectrum("custom", mu_values=(-1.0,))


def test_invalid_spectra():
    with pytest.raises(ValueError):
        CovarianceSpectrum("white")
    with pytest.raises(ValueError):
        CovarianceSpectrum("cosine", d=2)
    with pytest.raises(ValueError):
        CovarianceSpectrum("cosine", nu=0)


def test_increment_is_deterministic_and_scaled():
    a = sample_increment(COS2, 0.01, (3, 5, 7), J=64)
    b = sample_increment(COS2, 0.01, (3, 5, 7), J=64)
    np.testing.assert_array_equal(a.xi, b.xi)
    c = sample_increment(COS2, 0.01, (3, 5, 8), J=64)
    assert not np.array_equal(a.xi, c.xi)
    with pytest.raises(ValueError):
        sample_increment(COS2, 0.0, (0, 0, 0), J=4)


def test_increment_modes_shared_across_truncations():
    small = sample_increment(COM2, 0.1, (1, 2, 3), J=16)
    big = sample_increment(COM2, 0.1, (1, 2, 3), J=64)
    np.testing.assert_array_equal(small.xi, big.xi[:16])


def test_increment_variance():
    dt = 0.02
    xs = np.array([sample_increment(COS2, dt, (0, 0, n), J=8).xi for n in range(4000)])
    expect = COS2.mu_array(8) * dt
    np.testing.assert_allclose(xs.var(axis=0), expect, rtol=0.08)


def test_stream_counters_reject_negative():
    with pytest.raises(ValueError):
        rng.stream_keys(0, -1)


def test_holder_bound_dominates_measured_norm():
    x = np.linspace(0, 1, 2001)
    for j in (1, 4, 9):
        g = math.sqrt(2) * np.cos(j * math.pi * x)
        for delta in (0.3, 1.0):
            diff = np.abs(g[:, None] - g[None, :])
            dist = np.abs(x[:, None] - x[None, :])
            np.fill_diagonal(dist, 1.0)
            measured = np.abs(g).max() + (diff / dist**delta).max()
            assert measured <= holder_norm_bound(COS2, j, delta) + 1e-9


def test_eigenfunction_condition_threshold():
    # cosine, rho = 2: sum j^(2 delta - 2) finite iff delta < 1/2
    assert eigenfunction_condition_check(COS2, 0.45).passed
    assert not eigenfunction_condition_check(COS2, 0.5).passed
    assert eigenfunction_condition_check(CovarianceSpectrum("cosine", rho=3.0), 0.95).passed
    with pytest.raises(ValueError):
        eigenfunction_condition_check(COS2, 0.0)


def test_eigenfunctions_on_grid_match_direct_evaluation():
    m = 15
    x = grid_nodes(m)[..., 0]
    for spec in (COS2, COM2):
        vals = eigenfunction_values(spec, 16, m)
        f = np.cos if spec.eigenbasis == "cosine" else np.sin
        expect = np.array([math.sqrt(2) * f(j * math.pi * x) for j in range(1, 17)])
        np.testing.assert_allclose(vals, expect, atol=1e-12)


def test_cosine_noise_alias_guard():
    with pytest.raises(ValueError):
        noise_on_grid(COS2, np.ones(20), 20, 15)


@given(st.integers(0, 2**40), st.integers(0, 10**6), st.integers(0, 10**6))
def test_normals_are_pure_functions_of_keys(seed, traj, step):
    keys = rng.stream_keys(seed, rng.NOISE, traj, step)
    modes = rng.mode_keys(np.arange(1, 6))
    a = rng.normals(keys, modes)
    b = rng.normals(rng.stream_keys(seed, rng.NOISE, traj, step), modes[::-1])[:, ::-1]
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a))


@given(st.floats(1.1, 6.0), st.integers(8, 200))
def test_truncated_trace_below_full(rho, J):
    rep = trace(CovarianceSpectrum("cosine", rho=rho), J)
    assert rep.truncated <= rep.full + 1e-12
    assert rep.full - rep.truncated <= rep.tail_bound + 1e-12
