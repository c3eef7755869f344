"""Spectral Galerkin time stepping of the mild equation and Monte Carlo moments.

Two schemes are available.

``exponential_euler``
    ``X <- e^{A dt} (X + dt P_N F(X) + P_N B(X) dW)``.
``accelerated`` (default)
    ``X <- e^{A dt} X + phi(dt) P_N F(X) + s(dt) * P_N B(X) dW`` with
    ``phi_k = (1 - e^{-lam_k dt}) / lam_k`` and
    ``s_k = sqrt((1 - e^{-2 lam_k dt}) / (2 lam_k dt))``.  For additive noise
    this reproduces the exact transition law of every mode, so it has no
    time-step bias on the linear part.  The plain scheme damps mode k's
    stationary variance by ``2a / (e^{2a} - 1)`` with ``a = lam_k dt``,
    which dominates once ``lam_N dt`` is not small.

Nonlinear terms are evaluated pseudospectrally on the ``2N+1`` point grid.
Trajectories are simulated in fixed blocks of :data:`CHUNK` consecutive
indices; the noise of trajectory ``tau`` at step ``n`` is a pure function of
``(seed, tau, n, mode)``, so results do not depend on the worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from spdelab import rng
from spdelab.coefficients import NemytskiiPair
from spdelab.noise_model import CovarianceSpectrum, noise_on_grid
from spdelab.spectral_space import (
    OperatorSpec,
    SpectralField,
    coeffs_to_grid,
    eigenvalues,
    fractional_norms,
    grid_nodes,
    grid_to_coeffs,
)

__all__ = [
    "CHUNK",
    "SCHEMES",
    "SimulationConfig",
    "MomentRow",
    "MomentTable",
    "EnsembleResult",
    "Trajectory",
    "DivergedEnsembleError",
    "step",
    "simulate_trajectory",
    "run_ensemble",
    "ensemble_moments",
]

CHUNK = 128
SCHEMES = ("accelerated", "exponential_euler")


class DivergedEnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    op: OperatorSpec
    spec: CovarianceSpectrum
    pair: NemytskiiPair
    n_modes: int
    initial: SpectralField | None = None  # None means X_0 = 0
    T: float = 1.0
    n_steps: int = 1024
    n_traj: int = 100
    p: float = 2.0
    seed: int = 0
    checkpoints: tuple[float, ...] = (1.0,)
    r_list: tuple[float, ...] = (0.0,)
    p_list: tuple[float, ...] = ()  # extra moment orders besides p
    increment_base: float | None = None  # t for E||X_{t+h} - X_t||^p
    h_list: tuple[float, ...] = ()
    scheme: str = "accelerated"
    noise_refinement: int = 1  # each step sums this many finer increments

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.n_steps < 1 or self.n_modes < 1 or self.n_traj < 1:
            raise ValueError("n_steps, n_modes and n_traj must be >= 1")
        if self.p < 2 or any(q < 2 for q in self.p_list):
            raise ValueError("moment orders must satisfy p >= 2")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.noise_refinement < 1:
            raise ValueError("noise_refinement must be >= 1")
        if self.op.d != self.spec.d:
            raise ValueError("operator and noise dimensions differ")
        if self.initial is not None:
            if self.initial.op != self.op or self.initial.n_modes != self.n_modes:
                raise ValueError("initial state does not match operator / truncation")
        if any(r < 0 for r in self.r_list):
            raise ValueError("r_list entries must be >= 0")
        for t in self.checkpoints:
            self.step_index(t)
        if self.h_list:
            if self.increment_base is None:
                raise ValueError("h_list needs increment_base")
            for h in self.h_list:
                if not h > 0:
                    raise ValueError("increment lags must be positive")
                self.step_index(self.increment_base + h)
        if self.J > self.m_points + (1 if self.spec.eigenbasis == "cosine" else 0):
            raise ValueError(f"noise truncation J = {self.J} exceeds the {self.m_points}-point grid")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def J(self) -> int:
        return self.spec.truncation(self.n_modes)

    @property
    def m_points(self) -> int:
        return 2 * self.n_modes + 1

    @property
    def moment_orders(self) -> tuple[float, ...]:
        return tuple(sorted({float(self.p), *map(float, self.p_list)}))

    def step_index(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not 0 <= k <= self.n_steps or abs(k * self.dt - t) > 1e-9 * self.T:
            raise ValueError(f"time {t} is not on the step grid of [0, {self.T}]")
        return k


class _Stepper:
    """Precomputed operators for one configuration."""

    def __init__(self, cfg: SimulationConfig):
        self.cfg = cfg
        d, N = cfg.op.d, cfg.n_modes
        self.shape = (N,) * d
        self.lam = eigenvalues(cfg.op, N)
        dt = cfg.dt
        self.decay = np.exp(-self.lam * dt)
        if cfg.scheme == "accelerated":
            self.drift_w = -np.expm1(-self.lam * dt) / self.lam
            self.noise_w = np.sqrt(-np.expm1(-2 * self.lam * dt) / (2 * self.lam * dt))
        else:
            self.drift_w = dt * self.decay
            self.noise_w = self.decay
        J = cfg.J
        self.mode_keys = cfg.spec.mode_keys(J)
        self.sd = np.sqrt(cfg.spec.mu_array(J) * dt)
        self.nodes = grid_nodes(cfg.m_points, d)
        pair = cfg.pair
        self.f_const = pair.f_constant
        self.b_const = pair.b_constant
        self.f_proj = None
        if self.f_const not in (None, 0.0):
            self.f_proj = grid_to_coeffs(np.full((cfg.m_points,) * d, self.f_const), N, d)
        self.b_fixed = None
        if self.b_const is None and pair.b_state_free:
            self.b_fixed = pair.b_values(self.nodes, 0.0)
        self.needs_grid = self.f_const is None or (self.b_const is None and not pair.b_state_free)
        # diagonal fast path: sine-basis noise times a constant
        self.diagonal = cfg.spec.eigenbasis == "sine" and self.b_const is not None
        if self.diagonal:
            idx = cfg.spec.indices(J)
            keep = np.all(idx <= N, axis=1)
            self.keep = keep
            self.keep_pos = tuple((idx[keep] - 1).T)

    def normals(self, traj: np.ndarray, n: int) -> np.ndarray:
        cfg = self.cfg
        S = cfg.noise_refinement
        if S == 1:
            return rng.normals(rng.stream_keys(cfg.seed, rng.NOISE, traj, n), self.mode_keys)
        z = np.zeros((traj.shape[0], self.mode_keys.shape[0]))
        for s in range(S):
            z += rng.normals(rng.stream_keys(cfg.seed, rng.NOISE, traj, n * S + s), self.mode_keys)
        return z / math.sqrt(S)

    def advance(self, X: np.ndarray, traj: np.ndarray, n: int) -> np.ndarray:
        cfg = self.cfg
        d, N, M = cfg.op.d, cfg.n_modes, cfg.m_points
        batch = X.shape[0]
        Y = coeffs_to_grid(X, M, d) if self.needs_grid else None
        # drift
        if self.f_const is None:
            drift = grid_to_coeffs(cfg.pair.f_values(self.nodes, Y), N, d)
        else:
            drift = self.f_proj
        # diffusion
        noise = None
        if self.b_const != 0.0:
            xi = self.sd * self.normals(traj, n)
            if self.diagonal:
                noise = np.zeros((batch,) + self.shape)
                noise[(slice(None),) + self.keep_pos] = self.b_const * xi[:, self.keep]
            else:
                dW = noise_on_grid(cfg.spec, xi, cfg.J, M)
                if self.b_const is not None:
                    bvals = self.b_const
                elif self.b_fixed is not None:
                    bvals = self.b_fixed
                else:
                    bvals = cfg.pair.b_values(self.nodes, Y)
                noise = grid_to_coeffs(bvals * dW, N, d)
        out = self.decay * X
        if drift is not None:
            out = out + self.drift_w * drift
        if noise is not None:
            out = out + self.noise_w * noise
        return out


def step(state: SpectralField, t_n: float, dt: float, config: SimulationConfig, rng_tuple) -> SpectralField:
    """One step of the configured scheme for a single trajectory.

    ``rng_tuple = (seed, trajectory, step)`` selects the noise; ``t_n`` is
    accepted for interface symmetry (the coefficients are autonomous).
    """
    if abs(dt - config.dt) > 1e-12 * config.dt:
        raise ValueError(f"dt = {dt} differs from the configured step {config.dt}")
    seed, traj, n = rng_tuple
    cfg = config if seed == config.seed else replace(config, seed=seed)
    X = _Stepper(cfg).advance(state.coeffs[None], np.array([traj]), int(n))[0]
    if not np.all(np.isfinite(X)):
        raise FloatingPointError("state diverged")
    return SpectralField(state.op, X)


@dataclass
class _ChunkResult:
    norms: np.ndarray  # (B, n_ckpt, n_r)
    inc_norms: np.ndarray  # (B, n_h, n_r)
    diverged: np.ndarray  # (B,) bool
    states: np.ndarray | None  # (B, n_ckpt) + shape when requested


def _run_chunk(cfg: SimulationConfig, start: int, stop: int, keep_states: bool = False) -> _ChunkResult:
    st = _Stepper(cfg)
    traj = np.arange(start, stop, dtype=np.int64)
    B = traj.shape[0]
    X0 = np.zeros(st.shape) if cfg.initial is None else cfg.initial.coeffs
    X = np.broadcast_to(X0, (B,) + st.shape).copy()
    ck_steps = [cfg.step_index(t) for t in cfg.checkpoints]
    r_arr = cfg.r_list
    norms = np.full((B, len(ck_steps), len(r_arr)), np.nan)
    states = np.full((B, len(ck_steps)) + st.shape, np.nan) if keep_states else None
    base = cfg.step_index(cfg.increment_base) if cfg.h_list else None
    lag_steps = [cfg.step_index(cfg.increment_base + h) for h in cfg.h_list]
    inc = np.full((B, len(lag_steps), len(r_arr)), np.nan)
    X_base = None
    alive = np.ones(B, dtype=bool)

    def record(n):
        nonlocal X_base
        for c, s in enumerate(ck_steps):
            if s == n:
                for i, r in enumerate(r_arr):
                    norms[alive, c, i] = fractional_norms(X[alive], st.lam, r)
                if keep_states:
                    states[alive, c] = X[alive]
        if base is not None:
            if n == base:
                X_base = X.copy()
            for c, s in enumerate(lag_steps):
                if s == n:
                    diff = X[alive] - X_base[alive]
                    for i, r in enumerate(r_arr):
                        inc[alive, c, i] = fractional_norms(diff, st.lam, r)

    record(0)
    for n in range(cfg.n_steps):
        X = st.advance(X, traj, n)
        bad = ~np.all(np.isfinite(X.reshape(B, -1)), axis=1)
        if np.any(bad & alive):
            alive &= ~bad
            X[~alive] = 0.0
        record(n + 1)
    norms[~alive] = np.nan
    inc[~alive] = np.nan
    return _ChunkResult(norms, inc, ~alive, states)


@dataclass(frozen=True)
class Trajectory:
    times: tuple[float, ...]
    states: tuple[SpectralField | None, ...]
    diverged: bool


def simulate_trajectory(config: SimulationConfig, traj_index: int) -> Trajectory:
    """States of one trajectory at the checkpoints.

    The trajectory is computed inside its fixed block so it is bitwise
    identical to the same trajectory in an ensemble run.
    """
    if not 0 <= traj_index < config.n_traj:
        raise ValueError("trajectory index out of range")
    start = (traj_index // CHUNK) * CHUNK
    stop = min(start + CHUNK, config.n_traj)
    res = _run_chunk(config, start, stop, keep_states=True)
    k = traj_index - start
    if res.diverged[k]:
        return Trajectory(config.checkpoints, (None,) * len(config.checkpoints), True)
    states = tuple(SpectralField(config.op, res.states[k, c]) for c in range(len(config.checkpoints)))
    return Trajectory(config.checkpoints, states, False)


@dataclass(frozen=True)
class MomentRow:
    t: float
    r: float
    p: float
    estimate: float
    std_error: float
    n_traj: int
    N: int
    J: int
    dt: float
    h: float = 0.0  # lag, for increment rows


@dataclass(frozen=True)
class MomentTable:
    rows: tuple[MomentRow, ...]
    n_diverged: int = 0

    def lookup(self, t: float, r: float, p: float = 2.0, h: float = 0.0) -> MomentRow:
        for row in self.rows:
            if (
                math.isclose(row.t, t, abs_tol=1e-12)
                and math.isclose(row.r, r, abs_tol=1e-12)
                and math.isclose(row.p, p, abs_tol=1e-12)
                and math.isclose(row.h, h, abs_tol=1e-12)
            ):
                return row
        raise KeyError((t, r, p, h))


@dataclass(frozen=True)
class EnsembleResult:
    moments: MomentTable
    increments: MomentTable | None
    norms: np.ndarray = field(repr=False)  # (n_traj, n_ckpt, n_r), NaN for diverged
    increment_norms: np.ndarray = field(repr=False)  # (n_traj, n_h, n_r)
    n_diverged: int = 0


def _chunks(n_traj: int):
    return [(s, min(s + CHUNK, n_traj)) for s in range(0, n_traj, CHUNK)]


def _moment_rows(values, times, cfg, h_values=None):
    """values: (n_traj, n_t, n_r) norms; diverged rows are NaN and dropped."""
    rows = []
    ok = ~np.any(np.isnan(values.reshape(values.shape[0], -1)), axis=1)
    good = values[ok]
    n = good.shape[0]
    for c, t in enumerate(times):
        for i, r in enumerate(cfg.r_list):
            for p in cfg.moment_orders:
                x = good[:, c, i] ** p
                est = float(np.mean(x))
                se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
                h = 0.0 if h_values is None else h_values[c]
                rows.append(MomentRow(float(t), float(r), p, est, se, n, cfg.n_modes, cfg.J, cfg.dt, h))
    rows.sort(key=lambda row: (row.t, row.h, row.r, row.p))
    return tuple(rows)


def run_ensemble(config: SimulationConfig, workers: int = 1) -> EnsembleResult:
    """Simulate all trajectories and reduce to moment tables."""
    chunks = _chunks(config.n_traj)
    if workers <= 1 or len(chunks) == 1:
        results = [_run_chunk(config, a, b) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_chunk, config, a, b) for a, b in chunks]
            results = [f.result() for f in futures]
    norms = np.concatenate([r.norms for r in results])
    inc = np.concatenate([r.inc_norms for r in results])
    diverged = int(np.sum(np.concatenate([r.diverged for r in results])))
    if diverged == config.n_traj:
        raise DivergedEnsembleError(f"all {config.n_traj} trajectories diverged")
    moments = MomentTable(_moment_rows(norms, config.checkpoints, config), diverged)
    increments = None
    if config.h_list:
        times = [config.increment_base] * len(config.h_list)
        increments = MomentTable(_moment_rows(inc, times, config, config.h_list), diverged)
    return EnsembleResult(moments, increments, norms, inc, diverged)


def ensemble_moments(config: SimulationConfig, r_list=None, workers: int = 1) -> MomentTable:
    """Monte Carlo estimates of ``E ||X_t||_{V_r}^p`` at every checkpoint."""
    if r_list is not None:
        config = replace(config, r_list=tuple(float(r) for r in r_list))
    return run_ensemble(config, workers).moments
