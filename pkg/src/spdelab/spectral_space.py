"""Dirichlet Laplacian eigenbasis on (0,1)^d.

Functions live either as :class:`SpectralField` (coefficients on the sine
basis ``e_i = 2^{d/2} prod_k sin(i_k pi x_k)``) or as :class:`GridField`
(samples on the interior nodes ``x_k = k/(M+1)``).  The two are linked by a
type-I discrete sine transform which is exact on sine polynomials of degree
at most M.

All eigenvalues ``kappa pi^2 |i|^2`` of ``-A`` are positive, so fractional
powers are taken of ``-A`` itself (no spectral shift).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft

__all__ = [
    "OperatorSpec",
    "SpectralField",
    "GridField",
    "SemigroupBoundReport",
    "eigenvalue",
    "eigenvalues",
    "eigenfunction_eval",
    "fractional_norm",
    "fractional_norms",
    "semigroup_apply",
    "semigroup_bound_check",
    "to_spectral",
    "from_spectral",
    "coeffs_to_grid",
    "grid_to_coeffs",
    "grid_nodes",
]


@dataclass(frozen=True)
class OperatorSpec:
    """``A = kappa * Laplacian`` with Dirichlet conditions on (0,1)^d."""

    d: int = 1
    kappa: float = 1.0
    eta: float = 0.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d!r}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa!r}")
        if self.eta != 0:
            raise ValueError("only eta = 0 is supported (all eigenvalues of -A are positive)")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralField:
    """Galerkin-truncated element of H: ``coeffs[i-1]`` multiplies ``e_i``."""

    op: OperatorSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = _freeze(self.coeffs)
        if c.ndim != self.op.d or len(set(c.shape)) != 1:
            raise ValueError(
                f"expected {self.op.d}-d cube of coefficients, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_modes(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, op: OperatorSpec, n_modes: int) -> "SpectralField":
        return cls(op, np.zeros((n_modes,) * op.d))

    @classmethod
    def basis(cls, op: OperatorSpec, n_modes: int, index) -> "SpectralField":
        """The eigenfunction ``e_index`` (1-based multi-index)."""
        idx = _as_index(index, op.d)
        c = np.zeros((n_modes,) * op.d)
        c[tuple(k - 1 for k in idx)] = 1.0
        return cls(op, c)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        if other.op != self.op or other.n_modes != self.n_modes:
            raise ValueError("fields live in different spaces")
        return SpectralField(self.op, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self + SpectralField(other.op, -other.coeffs)

    def scaled(self, factor: float) -> "SpectralField":
        return SpectralField(self.op, factor * self.coeffs)


@dataclass(frozen=True)
class GridField:
    """Samples on the M^d interior nodes ``k/(M+1)``, k = 1..M."""

    d: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = _freeze(self.values)
        if v.ndim != self.d or len(set(v.shape)) != 1:
            raise ValueError(f"expected {self.d}-d cube of samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def m_points(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return 1.0 / (self.m_points + 1)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (M,)*d + (d,)."""
        return grid_nodes(self.m_points, self.d)

    @classmethod
    def from_function(cls, func, m_points: int, d: int = 1) -> "GridField":
        """Sample ``func(x)`` where ``x`` has a trailing axis of length d (or is 1-d)."""
        x = grid_nodes(m_points, d)
        vals = func(x[..., 0]) if d == 1 else func(x)
        return cls(d, np.broadcast_to(vals, (m_points,) * d))


def grid_nodes(m_points: int, d: int = 1) -> np.ndarray:
    x1 = np.arange(1, m_points + 1) / (m_points + 1)
    mesh = np.meshgrid(*([x1] * d), indexing="ij")
    return np.stack(mesh, axis=-1)


def _as_index(i, d: int) -> tuple[int, ...]:
    idx = (int(i),) if np.ndim(i) == 0 else tuple(int(k) for k in i)
    if len(idx) != d:
        raise ValueError(f"multi-index {i!r} does not match dimension {d}")
    if min(idx) < 1:
        raise ValueError(f"invalid index {i!r}: components must be >= 1")
    return idx


def eigenvalue(op: OperatorSpec, i) -> float:
    """``lambda_i = kappa pi^2 (i_1^2 + ... + i_d^2)``."""
    idx = _as_index(i, op.d)
    return op.kappa * math.pi**2 * sum(k * k for k in idx)


def eigenvalues(op: OperatorSpec, n_modes: int) -> np.ndarray:
    """All eigenvalues of the truncation, shape (N,)*d."""
    k2 = np.arange(1, n_modes + 1, dtype=np.float64) ** 2
    total = np.zeros((n_modes,) * op.d)
    for axis in range(op.d):
        shape = [1] * op.d
        shape[axis] = n_modes
        total = total + k2.reshape(shape)
    return op.kappa * np.pi**2 * total


def eigenfunction_eval(op: OperatorSpec, i, x) -> float:
    idx = _as_index(i, op.d)
    pt = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if pt.shape != (op.d,):
        raise ValueError(f"point {x!r} does not match dimension {op.d}")
    if np.any(pt <= 0.0) or np.any(pt >= 1.0):
        raise ValueError(f"point {x!r} is not interior to (0,1)^{op.d}")
    val = 2.0 ** (op.d / 2)
    for k, xk in zip(idx, pt):
        val *= math.sin(k * math.pi * xk)
    return val


def fractional_norms(coeffs: np.ndarray, lam: np.ndarray, r: float) -> np.ndarray:
    """V_r norms of a batch of coefficient arrays (trailing axes match ``lam``)."""
    axes = tuple(range(coeffs.ndim - lam.ndim, coeffs.ndim))
    if r == 0:
        return np.sqrt(np.sum(coeffs * coeffs, axis=axes))
    w = lam ** (2.0 * r)
    return np.sqrt(np.sum(w * coeffs * coeffs, axis=axes))


def fractional_norm(v: SpectralField, r: float) -> float:
    """``||(-A)^r v||_H`` computed spectrally."""
    if r < 0:
        raise ValueError(f"exponent must be >= 0, got {r}")
    return float(fractional_norms(v.coeffs, eigenvalues(v.op, v.n_modes), r))


def semigroup_apply(v: SpectralField, t: float) -> SpectralField:
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    if t == 0:
        return v
    return SpectralField(v.op, np.exp(-eigenvalues(v.op, v.n_modes) * t) * v.coeffs)


@dataclass(frozen=True)
class SemigroupBoundReport:
    r: float
    max_smoothing: float  # max (t lam)^r exp(-lam t)
    max_increment: float  # max (t lam)^-r |exp(-lam t) - 1|
    smoothing_constant: float  # sup_x x^r e^-x = (r/e)^r
    passed: bool


def semigroup_bound_check(
    r: float,
    t_grid: Sequence[float],
    mode_grid: Sequence,
    op: OperatorSpec | None = None,
    tol: float = 1e-12,
) -> SemigroupBoundReport:
    """Check the analytic-semigroup estimates with constant 1 on a (t, lambda) grid.

    ``mode_grid`` holds multi-indices (or plain ints for d = 1); the
    eigenvalues come from ``op`` (default: 1-d, kappa = 1).
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    op = op or OperatorSpec()
    t = np.asarray(t_grid, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("times must be positive")
    lam = np.array([eigenvalue(op, i) for i in mode_grid])
    x = t[:, None] * lam[None, :]
    smoothing = x**r * np.exp(-x)
    increment = -np.expm1(-x) / x**r
    const = 1.0 if r == 0 else (r / math.e) ** r
    s_max = float(smoothing.max())
    i_max = float(increment.max())
    ok = s_max <= const + tol and i_max <= 1.0 + tol and s_max <= 1.0 + tol
    return SemigroupBoundReport(r, s_max, i_max, const, bool(ok))


def _dst_axes(d: int, ndim: int) -> tuple[int, ...]:
    return tuple(range(ndim - d, ndim))


def coeffs_to_grid(coeffs: np.ndarray, m_points: int, d: int) -> np.ndarray:
    """Evaluate sine series on the M-point interior grid (batched over leading axes)."""
    n = coeffs.shape[-1]
    axes = _dst_axes(d, coeffs.ndim)
    if n < m_points:
        pad = [(0, 0)] * (coeffs.ndim - d) + [(0, m_points - n)] * d
        coeffs = np.pad(coeffs, pad)
    elif n > m_points:
        # modes above M are not representable on the grid
        sl = (Ellipsis,) + (slice(0, m_points),) * d
        coeffs = coeffs[sl]
    return scipy.fft.dstn(coeffs, type=1, axes=axes) * (0.5**0.5) ** d


def grid_to_coeffs(values: np.ndarray, n_modes: int, d: int) -> np.ndarray:
    """Discrete sine coefficients ``(M+1)^-d sum_k v(x_k) e_i(x_k)``, first N kept."""
    m = values.shape[-1]
    axes = _dst_axes(d, values.ndim)
    full = scipy.fft.dstn(values, type=1, axes=axes) * (2.0**-0.5 / (m + 1)) ** d
    if n_modes <= m:
        return full[(Ellipsis,) + (slice(0, n_modes),) * d]
    pad = [(0, 0)] * (values.ndim - d) + [(0, n_modes - m)] * d
    return np.pad(full, pad)


def from_spectral(v: SpectralField, m_points: int | None = None) -> GridField:
    """Sample ``v`` on M interior nodes (default M = N)."""
    m = v.n_modes if m_points is None else m_points
    return GridField(v.op.d, coeffs_to_grid(v.coeffs, m, v.op.d))


def to_spectral(g: GridField, op: OperatorSpec, n_modes: int | None = None) -> SpectralField:
    """Project grid samples onto the first N sine modes (default N = M).

    Exact for sine polynomials of degree <= M; for N > M the extra
    coefficients are zero since an M-point grid resolves only M modes.
    """
    if g.d != op.d:
        raise ValueError(f"grid is {g.d}-d but operator is {op.d}-d")
    n = g.m_points if n_modes is None else n_modes
    return SpectralField(op, grid_to_coeffs(g.values, n, g.d))
