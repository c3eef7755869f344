import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdelab.noise_model import CovarianceSpectrum
from spdelab.oracles import ou_oracle_time_increment
from spdelab.regularity import (
    DataError,
    make_verdict,
    oracle_spatial_values,
    predicted_gamma_star,
    predicted_temporal_exponent,
    spatial_scan,
    temporal_fit,
    threshold_table,
)
from spdelab.spectral_space import OperatorSpec, eigenvalue

GRID = np.round(np.arange(0.5, 1.0001, 0.05), 2)
N_LIST = [64, 128, 256, 512, 1024, 2048, 4096]


def partial_sums(threshold, n_list=N_LIST, grid=GRID):
    # sum_{k<=N} k^(4g - 4 threshold - 1): converges iff g < threshold
    k = np.arange(1, max(n_list) + 1, dtype=float)
    out = np.empty((len(n_list), len(grid)))
    for c, g in enumerate(grid):
        cum = np.cumsum(k ** (4 * g - 4 * threshold - 1))
        out[:, c] = cum[np.array(n_list) - 1]
    return out


def test_predicted_thresholds():
    assert predicted_gamma_star("commutative", 2.0) == 0.75
    assert predicted_gamma_star("commutative", 3.0, d=2) == 0.75
    assert predicted_gamma_star("cosine", 2.0) == 0.75
    assert predicted_gamma_star("cosine", 3.0) == 0.75
    assert predicted_gamma_star("cosine", 3.0, boundary_compatible=True) == 1.0
    with pytest.raises(ValueError):
        predicted_gamma_star("custom", 2.0)
    assert predicted_temporal_exponent(0.75, 0.0) == 0.5
    assert predicted_temporal_exponent(0.75, 0.5) == 0.25


def test_scan_on_synthetic_series():
    scan = spatial_scan(N_LIST, GRID, partial_sums(0.8))
    assert scan.conclusive and scan.monotone
    assert abs(scan.estimated_gamma_star - 0.8) < 0.02
    assert abs(scan.rule_gamma_star - 0.8) <= 0.05 + 1e-9
    assert scan.bracket[1] == scan.rule_gamma_star
    low = [e for e in scan.slopes if e.gamma <= 0.6]
    assert all(abs(e.slope) <= 0.05 for e in low)


@given(st.floats(1e-6, 1e6))
def test_slopes_are_scale_invariant(c):
    vals = partial_sums(0.75)
    a = spatial_scan(N_LIST, GRID, vals)
    b = spatial_scan(N_LIST, GRID, c * vals)
    for x, y in zip(a.slopes, b.slopes):
        assert x.slope == pytest.approx(y.slope, abs=1e-9)
    assert a.rule_gamma_star == b.rule_gamma_star


def test_scan_input_errors():
    vals = partial_sums(0.75)
    with pytest.raises(DataError):
        spatial_scan(N_LIST[:3], GRID, vals[:3])
    with pytest.raises(DataError):
        spatial_scan(N_LIST, GRID, -vals)
    with pytest.raises(DataError):
        spatial_scan(N_LIST, GRID, vals[:, :3])


def test_non_monotone_profile_is_inconclusive():
    vals = partial_sums(0.75)
    vals[:, 8] = vals[0, 8]  # flat column above the threshold
    scan = spatial_scan(N_LIST, GRID, vals)
    assert not scan.monotone and not scan.conclusive
    verdict = make_verdict("x", 0.75, scan)
    assert not verdict.passed and not verdict.conclusive


def test_no_growth_on_grid_reported():
    scan = spatial_scan(N_LIST, GRID, partial_sums(1.5))
    assert scan.rule_gamma_star is None
    assert not scan.conclusive


def test_oracle_scan_commutative_small():
    spec = CovarianceSpectrum("commutative", rho=2.0)
    vals = oracle_spatial_values(spec, OperatorSpec(), "commutative", GRID, [64, 128, 256, 512, 1024], 1.0)
    scan = spatial_scan([64, 128, 256, 512, 1024], GRID, vals)
    assert abs(scan.estimated_gamma_star - 0.75) < 0.05
    assert abs(scan.rule_gamma_star - 0.75) <= 0.05 + 1e-9


def test_temporal_fit_power_law():
    h = 2.0 ** -np.arange(4, 12)
    fit = temporal_fit(h, 3.0 * h**0.8, p=2.0, r=0.1)
    assert fit.beta_hat == pytest.approx(0.4)
    assert max(abs(x) for x in fit.residuals) < 1e-12
    fit4 = temporal_fit(h, h**1.2, p=4.0)
    assert fit4.beta_hat == pytest.approx(0.3)


def test_temporal_fit_drops_small_lags():
    h = 2.0 ** -np.arange(2, 10)
    fit = temporal_fit(h, h, dt=2.0**-10)
    assert min(fit.h_used) >= 8 * 2.0**-10
    assert len(fit.h_used) == 6
    with pytest.raises(DataError):
        temporal_fit(h, h, dt=2.0**-8)
    with pytest.raises(DataError):
        temporal_fit(h, -h)
    with pytest.raises(DataError):
        temporal_fit(h, np.full(h.size, np.nan))


@pytest.mark.parametrize("r,target,tol", [(0.0, 0.5, 0.02), (0.25, 0.5, 0.05), (0.5, 0.25, 0.05)])
def test_oracle_temporal_exponents(r, target, tol):
    spec = CovarianceSpectrum("commutative", rho=2.0)
    h = 2.0 ** -np.arange(20, 14, -1)
    vals = [ou_oracle_time_increment(spec, OperatorSpec(), r, 2.0**-6, x, "commutative").value for x in h]
    assert temporal_fit(h, vals, r=r).beta_hat == pytest.approx(target, abs=tol)


def test_smooth_path_gives_large_exponent():
    # noise-free heat flow from e_1: the increment is differentiable in h
    op = OperatorSpec()
    lam = eigenvalue(op, 1)
    h = 2.0 ** -np.arange(12, 20)
    vals = (np.expm1(-lam * h) * math.exp(-lam * 0.1)) ** 2 * lam ** (2 * 0.2)
    assert temporal_fit(h, vals).beta_hat >= 1 - 1e-3


def test_verdict_and_table():
    scan = spatial_scan(N_LIST, GRID, partial_sums(0.75))
    h = 2.0 ** -np.arange(4, 10)
    fit = temporal_fit(h, h**1.0, r=0.0)
    v = make_verdict("demo", 0.75, scan, [fit])
    assert v.passed
    d = v.to_dict()
    assert d["preset"] == "demo" and d["pass"] is True
    assert {"gamma", "slope", "se"} <= set(d["slopes"][0])
    assert {"r", "beta_hat", "se"} <= set(d["temporal"][0])
    bad = make_verdict("demo", 1.0, scan)
    assert not bad.passed
    assert [t.preset for t in threshold_table([{"preset": "a", "predicted_gamma_star": 0.75, "scan": scan}])] == ["a"]
    empty = make_verdict("none", 0.75)
    assert not empty.passed and not empty.conclusive
