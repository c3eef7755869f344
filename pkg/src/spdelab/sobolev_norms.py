"""Sobolev-Slobodeckij and Hoelder norms of grid functions, and empirical
checks of the inequalities that tie them to the spectral V_r scale.

The double integral of the Slobodeckij seminorm is approximated by a
midpoint sum over ordered pairs of distinct nodes with cell weight
``h = 1/(M+1)`` per coordinate.  Dropping the diagonal cells loses a
contribution of order ``h^(2-2r)``; in one dimension the leading part of
that loss is known in closed form (a lattice sum expressed with the Riemann
zeta function) and is added back when ``diagonal_correction`` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from spdelab import kernels, rng
from spdelab.spectral_space import (
    GridField,
    OperatorSpec,
    coeffs_to_grid,
    eigenvalues,
    fractional_norms,
    grid_nodes,
)

__all__ = [
    "NormReport",
    "InequalityReport",
    "EquivalenceEstimate",
    "slobodeckij_norm",
    "slobodeckij_report",
    "holder_norm",
    "equivalence_constant_estimate",
    "multiplication_constant",
    "composition_constant",
    "multiplication_inequality_check",
    "composition_bound_check",
]


@dataclass(frozen=True)
class NormReport:
    value: float
    m_points: int
    rule: str
    diagonal_exclusion: bool = True


def _flat(g: GridField) -> tuple[np.ndarray, np.ndarray]:
    return g.values.ravel(), grid_nodes(g.m_points, g.d).reshape(-1, g.d)


def _diagonal_term(g: GridField, r: float) -> float:
    """Leading-order mass of the excluded diagonal cells (d = 1 only)."""
    h = g.spacing
    grad = np.gradient(g.values, h)
    lattice = 2.0 * float(scipy.special.zeta(2.0 * r - 1.0))  # regularized sum |m|^(1-2r)
    return -lattice * h ** (2.0 - 2.0 * r) * float(np.sum(grad * grad)) * h


def slobodeckij_report(g: GridField, r: float, diagonal_correction: bool = True) -> NormReport:
    """``W^{r,2}`` norm: L2 part plus the fractional difference quotient.

    The diagonal correction is only available in one dimension; for d >= 2
    the plain off-diagonal midpoint sum is returned.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    vals, pts = _flat(g)
    cell = g.spacing**g.d
    l2 = cell * float(np.dot(vals, vals))
    semi = cell * cell * kernels.pair_sum(vals, pts, g.d + 2.0 * r)
    use_corr = diagonal_correction and g.d == 1
    if use_corr:
        semi += _diagonal_term(g, r)
    rule = "midpoint-offdiag+diag" if use_corr else "midpoint-offdiag"
    return NormReport(math.sqrt(max(l2 + semi, 0.0)), g.m_points, rule)


def slobodeckij_norm(g: GridField, r: float, diagonal_correction: bool = True) -> float:
    return slobodeckij_report(g, r, diagonal_correction).value


def holder_norm(g: GridField, delta: float) -> float:
    """Grid ``C^delta`` norm; a lower bound for the continuum norm."""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    vals, pts = _flat(g)
    return float(np.max(np.abs(vals))) + kernels.pair_max(vals, pts, delta)


@dataclass(frozen=True)
class EquivalenceEstimate:
    r: float
    constant: float  # max over samples of max(W/V, V/W)
    ratios: np.ndarray  # per-sample ||v||_{W^{2r,2}} / ||v||_{V_r}
    m_points: int
    n_samples: int


def equivalence_constant_estimate(
    r: float,
    n_samples: int = 50,
    m_points: int = 128,
    n_modes: int = 16,
    seed: int = 0,
    op: OperatorSpec | None = None,
    diagonal_correction: bool = True,
) -> EquivalenceEstimate:
    """Empirical constant relating ``||v||_{V_r}`` and ``||v||_{W^{2r,2}}``.

    Samples are random sine polynomials ``sum_k z_k k^-1 e_k`` of degree
    ``n_modes`` (so they vanish on the boundary).  Sample ``i`` depends only
    on ``(seed, i)``, so enlarging ``n_samples`` keeps the earlier draws.
    """
    if not 0.0 < r < 0.5:
        raise ValueError(f"r must lie in (0, 1/2), got {r}")
    if abs(r - 0.25) < 1e-12:
        raise ValueError("r = 1/4 is the critical case and is excluded")
    op = op or OperatorSpec()
    if op.d != 1:
        raise ValueError("equivalence sampling is implemented for d = 1")
    k = np.arange(1, n_modes + 1)
    z = rng.normals(
        rng.stream_keys(seed, rng.EQUIV_SAMPLE, np.arange(n_samples)), rng.mode_keys(k[:, None])
    )
    coeffs = z / k
    spectral = fractional_norms(coeffs, eigenvalues(op, n_modes), r)
    grids = coeffs_to_grid(coeffs, m_points, 1)
    ratios = []
    for c, vals in zip(spectral, grids):
        if c == 0.0:
            continue
        w = slobodeckij_norm(GridField(1, vals), 2.0 * r, diagonal_correction)
        ratios.append(w / c)
    ratios = np.array(ratios)
    const = float(np.max(np.maximum(ratios, 1.0 / ratios)))
    return EquivalenceEstimate(r, const, ratios, m_points, n_samples)


@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    passed: bool

    @property
    def slack(self) -> float:
        return math.inf if self.lhs == 0 else self.rhs / self.lhs


def multiplication_constant(d: int, r: float, delta: float) -> float:
    if not 0.0 < r < delta <= 1.0:
        raise ValueError(f"need 0 < r < delta <= 1, got r={r}, delta={delta}")
    return (3.0 * d) ** (d / 2) / math.sqrt(delta - r)


def composition_constant(d: int, r: float, q: float) -> float:
    return q * (3.0 * d) ** d / (1.0 - r)


def multiplication_inequality_check(
    v: GridField, w: GridField, r: float, delta: float, diagonal_correction: bool = True
) -> InequalityReport:
    """``||v w||_{W^{r,2}} <= const * ||v||_{W^{r,2}} ||w||_{C^delta}``."""
    const = multiplication_constant(v.d, r, delta)
    if v.values.shape != w.values.shape:
        raise ValueError("fields live on different grids")
    prod = GridField(v.d, v.values * w.values)
    lhs = slobodeckij_norm(prod, r, diagonal_correction)
    rhs = const * slobodeckij_norm(v, r, diagonal_correction) * holder_norm(w, delta)
    return InequalityReport(lhs, rhs, bool(lhs <= rhs))


def composition_bound_check(pair, v: GridField, r: float, diagonal_correction: bool = True):
    """``||b(., v)||_{W^{r,2}} <= q (3d)^d / (1-r) * (1 + ||v||_{W^{r,2}})``."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    bv = GridField(v.d, pair.b_values(v.nodes(), v.values))
    lhs = slobodeckij_norm(bv, r, diagonal_correction)
    rhs = composition_constant(v.d, r, pair.q) * (1.0 + slobodeckij_norm(v, r, diagonal_correction))
    return InequalityReport(lhs, rhs, bool(lhs <= rhs))
