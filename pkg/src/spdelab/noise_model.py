"""Covariance spectra of Q, Q-Wiener increments and eigenfunction conditions.

Two families are built in:

``cosine`` (d = 1)
    ``g_0 = 1`` with ``mu_0 = 0`` and ``g_j = sqrt(2) cos(j pi x)``,
    ``mu_j = nu j^-rho``.  Mode 0 never carries noise; it is dropped from
    sampling and kept in reports.
``commutative``
    ``g_j = e_j`` (the Dirichlet sine basis), ``mu_j = nu (j_1+...+j_d)^-rho``.

``custom`` takes an explicit finite list of eigenvalues on either basis
(d = 1 only).

A spectrum's noise truncation ``n_noise`` (J) may be left as ``None``, in
which case it follows the Galerkin truncation N of whatever uses it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.fft
import scipy.special

from spdelab import rng
from spdelab.spectral_space import coeffs_to_grid

__all__ = [
    "CovarianceSpectrum",
    "WienerIncrement",
    "TraceReport",
    "EigenfunctionReport",
    "mu",
    "trace",
    "sample_increment",
    "holder_norm_bound",
    "eigenfunction_condition_check",
    "noise_on_grid",
    "eigenfunction_values",
]

Kind = Literal["cosine", "commutative", "custom"]


@dataclass(frozen=True)
class CovarianceSpectrum:
    kind: Kind
    nu: float = 1.0
    rho: float = 2.0
    d: int = 1
    n_noise: int | None = None
    basis: Literal["cosine", "sine"] = "cosine"  # custom kind only
    mu_values: tuple[float, ...] = field(default=(), repr=False)  # custom kind only

    def __post_init__(self):
        if self.kind not in ("cosine", "commutative", "custom"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.kind in ("cosine", "custom") and self.d != 1:
            raise ValueError(f"{self.kind} noise is defined for d = 1 only")
        if self.n_noise is not None and self.n_noise < 1:
            raise ValueError("n_noise must be >= 1")
        if self.kind == "custom":
            if not self.mu_values or min(self.mu_values) < 0:
                raise ValueError("custom spectra need non-negative mu_values")
            object.__setattr__(self, "mu_values", tuple(float(m) for m in self.mu_values))
            object.__setattr__(self, "n_noise", len(self.mu_values))

    @property
    def eigenbasis(self) -> str:
        if self.kind == "custom":
            return self.basis
        return "cosine" if self.kind == "cosine" else "sine"

    @property
    def trace_class(self) -> bool:
        if self.kind == "custom":
            return True
        return self.rho > (1 if self.kind == "cosine" else self.d)

    def truncation(self, n_modes: int | None = None) -> int:
        """Number of retained noise modes per dimension."""
        if self.n_noise is not None:
            return self.n_noise
        if n_modes is None:
            raise ValueError("noise truncation is coupled to N but no N was given")
        return int(n_modes)

    def indices(self, J: int) -> np.ndarray:
        """Retained multi-indices with mu_j > 0, shape (count, d), C order."""
        k = np.arange(1, J + 1)
        if self.d == 1:
            return k[:, None]
        mesh = np.meshgrid(*([k] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def mu_array(self, J: int) -> np.ndarray:
        """Eigenvalues of the retained modes in the layout of :meth:`indices`."""
        if self.kind == "custom":
            return np.asarray(self.mu_values[:J], dtype=np.float64)
        s = self.indices(J).sum(axis=1).astype(np.float64)
        return self.nu * s ** (-self.rho)

    def mode_keys(self, J: int) -> np.ndarray:
        return rng.mode_keys(self.indices(J))


def mu(spec: CovarianceSpectrum, j) -> float:
    """Eigenvalue of Q for index ``j`` (0 allowed for the cosine family)."""
    idx = (int(j),) if np.ndim(j) == 0 else tuple(int(k) for k in j)
    if len(idx) != spec.d:
        raise ValueError(f"index {j!r} does not match dimension {spec.d}")
    if spec.kind in ("cosine", "custom") and spec.eigenbasis == "cosine" and idx == (0,):
        return 0.0
    if min(idx) < 1:
        raise ValueError(f"invalid noise index {j!r}")
    if spec.n_noise is not None and max(idx) > spec.n_noise:
        raise ValueError(f"noise index {j!r} outside truncation J = {spec.n_noise}")
    if spec.kind == "custom":
        return spec.mu_values[idx[0] - 1]
    return spec.nu * float(sum(idx)) ** (-spec.rho)


@dataclass(frozen=True)
class TraceReport:
    truncated: float
    tail_bound: float  # inf when the series diverges
    full: float | None  # closed form when available
    n_noise: int
    trace_class: bool


def _simplex_zeta(d: int, s: float) -> float:
    """sum_{j in N^d} (j_1+...+j_d)^-s via binomial(n-1, d-1) = polynomial in n."""
    # coefficients of prod_{m=1}^{d-1} (n - m) / (d-1)!
    poly = np.poly1d([1.0])
    for m in range(1, d):
        poly = poly * np.poly1d([1.0, -float(m)])
    poly = poly / math.factorial(d - 1)
    total = 0.0
    for power, c in enumerate(poly.coeffs[::-1]):
        if c != 0:
            total += c * scipy.special.zeta(s - power)
    return float(total)


def trace(spec: CovarianceSpectrum, J: int | None = None) -> TraceReport:
    """Truncated trace plus a tail bound (integral comparison for cosine)."""
    J = spec.truncation(J)
    truncated = float(np.sum(spec.mu_array(J)))
    if spec.kind == "custom":
        return TraceReport(truncated, 0.0, truncated, J, True)
    if not spec.trace_class:
        return TraceReport(truncated, math.inf, None, J, False)
    if spec.kind == "cosine":
        tail = spec.nu * J ** (1.0 - spec.rho) / (spec.rho - 1.0)
        full = spec.nu * float(scipy.special.zeta(spec.rho))
        return TraceReport(truncated, tail, full, J, True)
    full = spec.nu * _simplex_zeta(spec.d, spec.rho)
    return TraceReport(truncated, max(full - truncated, 0.0), full, J, True)


@dataclass(frozen=True)
class WienerIncrement:
    """Coordinates of ``Delta W = sum_j xi_j g_j``; ``xi_j ~ N(0, mu_j dt)``."""

    xi: np.ndarray
    dt: float
    indices: np.ndarray = field(repr=False)


def sample_increment(spec: CovarianceSpectrum, dt: float, rng_state, J: int | None = None):
    """Draw the increment for ``rng_state = (seed, trajectory, step)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    seed, traj, step = rng_state
    J = spec.truncation(J)
    keys = rng.stream_keys(seed, rng.NOISE, traj, step)
    z = rng.normals(keys, spec.mode_keys(J))[0]
    xi = np.sqrt(spec.mu_array(J) * dt) * z
    return WienerIncrement(xi, dt, spec.indices(J))


def holder_norm_bound(spec: CovarianceSpectrum, j, delta: float) -> float:
    """Analytic upper bound on ``||g_j||_{C^delta}``."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    idx = (int(j),) if np.ndim(j) == 0 else tuple(int(k) for k in j)
    if spec.eigenbasis == "cosine":
        if idx == (0,):
            return 1.0  # g_0 = 1: sup norm 1, seminorm 0
        return math.sqrt(2.0) * (1.0 + 2.0 ** (1.0 - delta) * (idx[0] * math.pi) ** delta)
    sq = float(sum(k * k for k in idx))
    return 2.0 ** (spec.d / 2 + 1) * math.pi * sq ** (delta / 2)


@dataclass(frozen=True)
class EigenfunctionReport:
    delta: float
    sup_norm: float  # sup_j ||g_j||_C
    truncated_sum: float  # sum_{j<=J} mu_j * bound_j^2
    tail_bound: float
    passed: bool


def eigenfunction_condition_check(
    spec: CovarianceSpectrum, delta: float, J: int | None = None
) -> EigenfunctionReport:
    """Uniform boundedness of g_j and summability of mu_j ||g_j||^2_{C^delta}."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    J = spec.truncation(J if J is not None else 256)
    idx = spec.indices(J)
    bounds = np.array([holder_norm_bound(spec, tuple(i), delta) for i in idx])
    truncated = float(np.sum(spec.mu_array(J) * bounds**2))
    if spec.kind == "custom":
        return EigenfunctionReport(delta, math.sqrt(2.0), truncated, 0.0, True)
    if spec.kind == "cosine":
        sup = math.sqrt(2.0)
        expo = 2.0 * delta - spec.rho
        # sum_{j>J} 8 nu pi^2 j^expo <= 8 nu pi^2 J^(expo+1) / -(expo+1)
        tail = (8 * spec.nu * math.pi**2 * J ** (expo + 1) / -(expo + 1)) if expo < -1 else math.inf
    else:
        sup = 2.0 ** (spec.d / 2)
        expo = spec.d + 2.0 * delta - spec.rho
        tail = (
            spec.nu * 2.0 ** (spec.d + 2) * math.pi**2 * J**expo / (-expo * math.factorial(spec.d - 1))
            if expo < 0
            else math.inf
        )
    return EigenfunctionReport(delta, sup, truncated, tail, bool(math.isfinite(tail)))


def eigenfunction_values(spec: CovarianceSpectrum, J: int, m_points: int) -> np.ndarray:
    """g_j on the interior grid, shape (count, M, ..., M)."""
    count = spec.indices(J).shape[0]
    return noise_on_grid(spec, np.eye(count), J, m_points)


def noise_on_grid(spec: CovarianceSpectrum, xi: np.ndarray, J: int, m_points: int) -> np.ndarray:
    """Evaluate ``sum_j xi_j g_j`` on the M-point grid, batched over leading axes.

    ``xi`` has trailing length equal to the number of retained modes (flat,
    in :meth:`CovarianceSpectrum.indices` order).
    """
    xi = np.asarray(xi, dtype=np.float64)
    lead = xi.shape[:-1]
    if spec.eigenbasis == "sine":
        c = xi.reshape(lead + (J,) * spec.d)
        return coeffs_to_grid(c, m_points, spec.d)
    if J > m_points + 1:
        raise ValueError(f"J = {J} cosine modes alias on an M = {m_points} grid")
    c = np.zeros(lead + (m_points + 2,))
    c[..., 1 : J + 1] = xi / math.sqrt(2.0)
    if J == m_points + 1:
        c[..., m_points + 1] = xi[..., -1] * math.sqrt(2.0)
    y = scipy.fft.dct(c, type=1, axis=-1)
    return y[..., 1 : m_points + 1]
