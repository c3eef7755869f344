import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from spdelab.coefficients import NemytskiiPair, preset
from spdelab.noise_model import CovarianceSpectrum
from spdelab.oracles import ou_oracle_moment
from spdelab.simulator import (
    DivergedEnsembleError,
    SimulationConfig,
    ensemble_moments,
    run_ensemble,
    simulate_trajectory,
    step,
)
from spdelab.spectral_space import OperatorSpec, SpectralField, eigenvalues, grid_to_coeffs

OP = OperatorSpec()
COM2 = CovarianceSpectrum("commutative", rho=2.0)
COS2 = CovarianceSpectrum("cosine", rho=2.0)
SILENT = NemytskiiPair(b="0")


def config(**kw):
    base = dict(op=OP, spec=COM2, pair=preset("additive_one"), n_modes=16, T=0.25, n_steps=64, n_traj=16, checkpoints=(0.25,))
    base.update(kw)
    return SimulationConfig(**base)


@pytest.mark.parametrize("scheme", ["accelerated", "exponential_euler"])
def test_pure_decay_of_first_mode(scheme):
    x0 = SpectralField.basis(OP, 8, 1)
    cfg = config(pair=SILENT, n_modes=8, initial=x0, scheme=scheme, checkpoints=(0.125, 0.25))
    traj = simulate_trajectory(cfg, 0)
    lam1 = math.pi**2
    for t, state in zip(traj.times, traj.states):
        expect = np.zeros(8)
        expect[0] = math.exp(-lam1 * t)
        np.testing.assert_allclose(state.coeffs, expect, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("scheme", ["accelerated", "exponential_euler"])
def test_one_step_with_constant_forcing(scheme):
    cfg = config(pair=NemytskiiPair(f="3", b="0"), n_modes=8, scheme=scheme)
    dt = cfg.dt
    out = step(SpectralField.zeros(OP, 8), 0.0, dt, cfg, (0, 0, 0))
    lam = eigenvalues(OP, 8)
    proj = grid_to_coeffs(np.full(17, 3.0), 8, 1)
    weight = dt * np.exp(-lam * dt) if scheme == "exponential_euler" else -np.expm1(-lam * dt) / lam
    np.testing.assert_allclose(out.coeffs, weight * proj, rtol=1e-12, atol=1e-15)
    with pytest.raises(ValueError):
        step(SpectralField.zeros(OP, 8), 0.0, dt / 2, cfg, (0, 0, 0))


def test_noise_free_path_matches_ode_solver():
    # f(y) = y/(1+y^2), b = 0: the Galerkin system is an ODE we can integrate independently
    pair = NemytskiiPair(f="y/(1+y*y)", b="0", lip_f=1.0)
    N = 8
    x0 = SpectralField(OP, np.array([1.0, 0.0, 0.3, 0, 0, 0, 0, 0]))
    cfg = config(pair=pair, n_modes=N, initial=x0, n_steps=4096, n_traj=1, checkpoints=(0.25,))
    got = simulate_trajectory(cfg, 0).states[0].coeffs
    lam = eigenvalues(OP, N)
    from spdelab.spectral_space import coeffs_to_grid, grid_nodes

    def rhs(t, a):
        y = coeffs_to_grid(a, 2 * N + 1, 1)
        return -lam * a + grid_to_coeffs(y / (1 + y * y), N, 1)

    sol = solve_ivp(rhs, (0, 0.25), x0.coeffs, method="DOP853", rtol=1e-12, atol=1e-14)
    # first-order splitting error O(dt) on the drift
    np.testing.assert_allclose(got, sol.y[:, -1], atol=2e-5)


def test_trajectory_is_reproducible_and_matches_ensemble():
    cfg = config(n_traj=5, checkpoints=(0.25,), r_list=(0.0,))
    a = simulate_trajectory(cfg, 3).states[0].coeffs
    b = simulate_trajectory(cfg, 3).states[0].coeffs
    np.testing.assert_array_equal(a, b)
    res = run_ensemble(cfg)
    assert res.norms[3, 0, 0] == np.linalg.norm(a)
    with pytest.raises(ValueError):
        simulate_trajectory(cfg, 5)


def test_worker_count_does_not_change_results():
    cfg = config(n_traj=300, spec=COS2, n_modes=8, n_steps=16, checkpoints=(0.25,), r_list=(0.0, 0.3))
    one = run_ensemble(cfg, workers=1)
    three = run_ensemble(cfg, workers=3)
    np.testing.assert_array_equal(one.norms, three.norms)
    assert one.moments == three.moments


def test_deterministic_ensemble_has_zero_variance():
    x0 = SpectralField.basis(OP, 8, 2)
    cfg = config(pair=SILENT, n_modes=8, initial=x0, r_list=(0.0, 0.5))
    table = ensemble_moments(cfg)
    row = table.lookup(0.25, 0.5)
    lam2 = 4 * math.pi**2
    assert row.estimate == pytest.approx(lam2 * math.exp(-2 * lam2 * 0.25), rel=1e-12)
    assert row.std_error == 0.0


def test_higher_moments_satisfy_jensen():
    cfg = config(n_traj=200, p_list=(4.0,), r_list=(0.0, 0.25))
    table = ensemble_moments(cfg)
    for r in (0.0, 0.25):
        m2 = table.lookup(0.25, r, 2).estimate
        m4 = table.lookup(0.25, r, 4).estimate
        assert m2**2 <= m4


def test_small_ensemble_agrees_with_oracle():
    cfg = config(n_modes=32, n_traj=400, n_steps=256, T=0.5, checkpoints=(0.5,), r_list=(0.0, 0.25, 0.5))
    table = ensemble_moments(cfg)
    for g in (0.0, 0.25, 0.5):
        row = table.lookup(0.5, g)
        exact = ou_oracle_moment(COM2, OP, g, 0.5, "commutative", n_modes=32).value
        assert abs(row.estimate - exact) < 4 * row.std_error


def _paths(cfg):
    return np.array([simulate_trajectory(cfg, i).states[0].coeffs for i in range(cfg.n_traj)])


@pytest.mark.parametrize("scheme", ["accelerated", "exponential_euler"])
def test_strong_self_convergence(scheme):
    # coarse steps sum the fine increments, so all runs share one Brownian path
    pair = NemytskiiPair(f="y/(1+y*y)", b="1", lip_f=1.0)
    base = dict(pair=pair, n_modes=16, n_traj=12, scheme=scheme, checkpoints=(0.25,))
    ref = _paths(config(**base, n_steps=1024))
    errs = []
    for k in (32, 64, 128):
        x = _paths(config(**base, n_steps=k, noise_refinement=1024 // k))
        errs.append(math.sqrt(np.mean(np.sum((x - ref) ** 2, axis=1))))
    ratio = (errs[-1] / errs[0]) ** 0.5
    assert ratio <= 2**-0.5


def test_increment_moments_recorded():
    cfg = config(increment_base=0.125, h_list=(0.015625, 0.03125), r_list=(0.0,))
    res = run_ensemble(cfg)
    assert len(res.increments.rows) == 2
    small = res.increments.lookup(0.125, 0.0, h=0.015625).estimate
    large = res.increments.lookup(0.125, 0.0, h=0.03125).estimate
    assert 0 < small < large


def test_all_diverged_ensemble_raises():
    x0 = SpectralField(OP, np.full(8, 20.0))
    cfg = config(pair=NemytskiiPair(f="exp(y*y)", b="0", lip_f=1.0), n_modes=8, initial=x0, n_traj=3)
    traj = simulate_trajectory(cfg, 0)
    assert traj.diverged and traj.states == (None,)
    with pytest.raises(DivergedEnsembleError):
        run_ensemble(cfg)


@pytest.mark.parametrize(
    "kw",
    [
        dict(p=1.0),
        dict(p_list=(1.5,)),
        dict(checkpoints=(0.1,)),
        dict(scheme="implicit"),
        dict(h_list=(0.01,)),
        dict(spec=CovarianceSpectrum("cosine", rho=2.0, n_noise=64)),
        dict(n_traj=0),
    ],
)
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        config(**kw)


def test_two_dimensional_run():
    op = OperatorSpec(d=2)
    spec = CovarianceSpectrum("commutative", rho=3.0, d=2)
    cfg = SimulationConfig(op, spec, preset("nonlinear"), n_modes=6, T=0.1, n_steps=32, n_traj=8, checkpoints=(0.1,))
    res = run_ensemble(cfg)
    assert res.n_diverged == 0
    assert res.moments.lookup(0.1, 0.0).estimate > 0
