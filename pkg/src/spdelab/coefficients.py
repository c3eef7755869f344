"""Nemytskii drift and multiplicative diffusion built from scalar f(x, y), b(x, y)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from spdelab import expressions, rng
from spdelab.noise_model import (
    CovarianceSpectrum,
    eigenfunction_condition_check,
    eigenfunction_values,
)
from spdelab.spectral_space import (
    GridField,
    OperatorSpec,
    SpectralField,
    coeffs_to_grid,
    eigenvalue,
    eigenvalues,
    fractional_norms,
    grid_nodes,
    grid_to_coeffs,
    to_spectral,
)

__all__ = [
    "NemytskiiPair",
    "PRESETS",
    "preset",
    "apply_F",
    "apply_B",
    "hs_norm_B",
    "hs_norm_B_difference",
    "boundary_sine_hs_norm",
    "GrowthReport",
    "growth_bound_check",
    "growth_reference_constant",
    "boundary_compat_check",
    "lipschitz_spot_check",
]


@dataclass(frozen=True)
class NemytskiiPair:
    """Scalar coefficient functions given as expressions in ``x`` and ``y``.

    ``q`` bounds ``|b(x1,y1) - b(x2,y2)| <= q (|x1-x2| + |y1-y2|)`` and
    ``lip_f`` is the Lipschitz constant of ``f`` in ``y``.  Both are
    declared by the user and spot-checked by :func:`lipschitz_spot_check`.
    """

    f: str = "0"
    b: str = "1"
    q: float = 1.0
    lip_f: float = 0.0
    name: str = "custom"
    _trees: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError(f"q must be positive, got {self.q}")
        if self.lip_f < 0:
            raise ValueError("lip_f must be non-negative")
        object.__setattr__(self, "_trees", (expressions.parse(self.f), expressions.parse(self.b)))

    def __getstate__(self):
        return {"f": self.f, "b": self.b, "q": self.q, "lip_f": self.lip_f, "name": self.name}

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)
        self.__post_init__()

    def f_values(self, x: np.ndarray, y) -> np.ndarray:
        return expressions.evaluate(self._trees[0], x, y)

    def b_values(self, x: np.ndarray, y) -> np.ndarray:
        return expressions.evaluate(self._trees[1], x, y)

    def _constant(self, tree) -> float | None:
        if expressions.names(tree) - {"pi", "e"}:
            return None
        return float(expressions.evaluate(tree, np.zeros((1, 1)), 0.0)[0])

    @property
    def f_constant(self) -> float | None:
        """Value of f when it depends on neither x nor y, else None."""
        return self._constant(self._trees[0])

    @property
    def b_constant(self) -> float | None:
        return self._constant(self._trees[1])

    @property
    def b_state_free(self) -> bool:
        """True when b does not depend on the solution value y."""
        return "y" not in expressions.names(self._trees[1])


PRESETS = {
    "additive_one": NemytskiiPair("0", "1", q=1.0, name="additive_one"),
    "boundary_sine": NemytskiiPair("0", "sin(pi*x)", q=math.pi, name="boundary_sine"),
    "linear_state": NemytskiiPair("0", "y", q=1.0, name="linear_state"),
    "nonlinear": NemytskiiPair("y/(1+y*y)", "sin(y)+sin(pi*x)", q=math.pi, lip_f=1.0, name="nonlinear"),
}


def preset(name: str) -> NemytskiiPair:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown coefficient preset {name!r}; known: {sorted(PRESETS)}") from None


def apply_F(pair: NemytskiiPair, v: GridField) -> GridField:
    return GridField(v.d, pair.f_values(v.nodes(), v.values))


def apply_B(pair: NemytskiiPair, v: GridField, u: GridField) -> GridField:
    if v.values.shape != u.values.shape:
        raise ValueError("fields live on different grids")
    return GridField(v.d, pair.b_values(v.nodes(), v.values) * u.values)


def _state_coeffs(v, op: OperatorSpec) -> np.ndarray:
    if isinstance(v, SpectralField):
        return v.coeffs
    return to_spectral(v, op).coeffs


def _gauss_nodes(n: int, d: int):
    """Tensor Gauss-Legendre rule on (0,1)^d: 1-d nodes, tensor points (n,)*d + (d,), weights."""
    t, w = np.polynomial.legendre.leggauss(n)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    pts = np.stack(np.meshgrid(*([t] * d), indexing="ij"), axis=-1)
    wts = np.ones((n,) * d)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n
        wts = wts * w.reshape(shape)
    return t, pts, wts


def _sine_eval(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate a sine series on the tensor grid built from 1-d nodes ``t``."""
    k = np.arange(1, coeffs.shape[0] + 1)
    basis = math.sqrt(2.0) * np.sin(np.pi * np.outer(t, k))
    out = coeffs
    for ax in range(coeffs.ndim):
        out = np.moveaxis(np.tensordot(out, basis, axes=([ax], [1])), -1, ax)
    return out


def _noise_at(spec: CovarianceSpectrum, J: int, pts: np.ndarray) -> np.ndarray:
    """g_j at arbitrary tensor nodes, shape (count,) + pts.shape[:-1]."""
    idx = spec.indices(J)
    if spec.eigenbasis == "cosine":
        return math.sqrt(2.0) * np.cos(np.pi * np.outer(idx[:, 0], pts[..., 0]))
    out = np.full((idx.shape[0],) + pts.shape[:-1], 2.0 ** (spec.d / 2))
    for c in range(spec.d):
        out = out * np.sin(np.pi * idx[:, c].reshape((-1,) + (1,) * spec.d) * pts[..., c])
    return out


def _hs_full_h(spec, J, pts, weights, bvals) -> float:
    g = _noise_at(spec, J, pts)
    per_mode = np.sum((bvals * g) ** 2 * weights, axis=tuple(range(1, g.ndim)))
    return float(np.sqrt(np.sum(spec.mu_array(J) * per_mode)))


def _quad_size(n_modes: int) -> int:
    return 2 * n_modes + 64


def hs_norm_B(
    pair: NemytskiiPair,
    v,
    spec: CovarianceSpectrum,
    r: float,
    N: int,
    op: OperatorSpec | None = None,
) -> float:
    """``||B(v)||_{HS(U_0, V_r)}``.

    For ``r > 0`` each ``b(., v) g_j`` is projected onto the first N modes
    through the sine transform on the ``2N+1`` point grid, so the value is
    the Galerkin quantity whose growth in N diagnoses divergence.  For
    ``r = 0`` the exact H norm is used instead (Gauss-Legendre quadrature of
    the unprojected product), which the projected value never exceeds.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    op = op or OperatorSpec(d=spec.d)
    if op.d != spec.d:
        raise ValueError("operator and noise dimensions differ")
    coeffs = _state_coeffs(v, op)
    J = spec.truncation(N)
    if r == 0:
        t, pts, w = _gauss_nodes(_quad_size(max(N, J, coeffs.shape[0])), op.d)
        bvals = pair.b_values(pts, _sine_eval(coeffs, t))
        return _hs_full_h(spec, J, pts, w, bvals)
    m = 2 * N + 1
    vgrid = coeffs_to_grid(coeffs, m, op.d)
    bvals = pair.b_values(grid_nodes(m, op.d), vgrid)
    g = eigenfunction_values(spec, J, m)
    proj = grid_to_coeffs(bvals * g, N, op.d)
    norms = fractional_norms(proj, eigenvalues(op, N), r)
    return float(np.sqrt(np.sum(spec.mu_array(J) * norms**2)))


def hs_norm_B_difference(
    pair: NemytskiiPair, v, w, spec: CovarianceSpectrum, N: int, op: OperatorSpec | None = None
) -> float:
    """``||B(v) - B(w)||_{HS(U_0, H)}`` by quadrature of the unprojected products."""
    op = op or OperatorSpec(d=spec.d)
    cv, cw = _state_coeffs(v, op), _state_coeffs(w, op)
    J = spec.truncation(N)
    t, pts, wts = _gauss_nodes(_quad_size(max(N, J, cv.shape[0], cw.shape[0])), op.d)
    diff = pair.b_values(pts, _sine_eval(cv, t)) - pair.b_values(pts, _sine_eval(cw, t))
    return _hs_full_h(spec, J, pts, wts, diff)


def boundary_sine_hs_norm(spec: CovarianceSpectrum, r: float, N: int, op: OperatorSpec | None = None) -> float:
    """Closed form for ``b = sin(pi x)`` against cosine noise.

    ``sin(pi x) g_j = (e_{j+1} - e_{j-1}) / 2`` (with ``e_0 = 0``), so the
    projected squared norm is ``(lam_{j+1}^{2r} [j+1 <= N] + lam_{j-1}^{2r} [j-1 >= 1]) / 4``.
    """
    if spec.eigenbasis != "cosine" or spec.d != 1:
        raise ValueError("closed form needs one-dimensional cosine noise")
    op = op or OperatorSpec()
    J = spec.truncation(N)
    total = 0.0
    for j, m in zip(range(1, J + 1), spec.mu_array(J)):
        s = 0.0
        if j + 1 <= N:
            s += eigenvalue(op, j + 1) ** (2 * r)
        if 2 <= j <= N + 1:
            s += eigenvalue(op, j - 1) ** (2 * r)
        total += m * s / 4.0
    return math.sqrt(total)


@dataclass(frozen=True)
class GrowthReport:
    alpha: float
    n_list: tuple[int, ...]
    max_ratio: tuple[float, ...]  # per N, max over samples of HS / (1 + ||v||_{V_alpha})
    ratios: np.ndarray = field(repr=False)  # (len(n_list), sample_count)
    slope: float  # least-squares slope of log(max_ratio^2) against log N
    reference_constant: float | None  # bound from the growth chain, None if no admissible delta
    bounded: bool  # |slope| <= slope_tol


def growth_reference_constant(
    pair: NemytskiiPair,
    spec: CovarianceSpectrum,
    alpha: float,
    equivalence_constant: float,
    J: int = 4096,
) -> float | None:
    """``q C_r^2 (3d)^{2d} / (delta - 2r)^2 * (sum mu_j ||g_j||^2_{C^delta})^(1/2)``,
    minimised over admissible delta on a grid; ``C_r`` is an empirical estimate.
    """
    d = spec.d
    best = None
    for delta in np.linspace(0.02, 1.0, 50):
        if delta <= 2 * alpha:
            continue
        rep = eigenfunction_condition_check(spec, float(delta), J=min(J, spec.n_noise or J))
        if not rep.passed:
            continue
        s = math.sqrt(rep.truncated_sum + rep.tail_bound)
        c = pair.q * equivalence_constant**2 * (3 * d) ** (2 * d) / (delta - 2 * alpha) ** 2 * s
        best = c if best is None else min(best, c)
    return best


def sample_fields(op: OperatorSpec, alpha: float, n_modes: int, count: int, seed: int) -> np.ndarray:
    """Random spectral coefficients ``a_i = lam_i^(-alpha-1/2-0.01) z_i``.

    ``z_i`` depends only on ``(seed, sample, i)``, so the samples at
    different truncations share their low modes.
    """
    lam = eigenvalues(op, n_modes)
    idx = np.stack(np.meshgrid(*([np.arange(1, n_modes + 1)] * op.d), indexing="ij"), -1).reshape(-1, op.d)
    z = rng.normals(rng.stream_keys(seed, rng.FIELD_SAMPLE, np.arange(count)), rng.mode_keys(idx))
    z = z.reshape((count,) + (n_modes,) * op.d)
    return lam ** (-alpha - 0.51) * z


def growth_bound_check(
    pair: NemytskiiPair,
    spec: CovarianceSpectrum,
    alpha: float,
    sample_count: int,
    N_list,
    op: OperatorSpec | None = None,
    seed: int = 0,
    slope_tol: float = 0.05,
    equivalence_constant: float | None = None,
) -> GrowthReport:
    """Track ``max ||B(v)||_{HS(U_0,V_alpha)} / (1 + ||v||_{V_alpha})`` across truncations."""
    n_list = tuple(int(n) for n in N_list)
    if not n_list:
        raise ValueError("N_list must not be empty")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    op = op or OperatorSpec(d=spec.d)
    ratios = np.empty((len(n_list), sample_count))
    for a, n in enumerate(n_list):
        fields = sample_fields(op, alpha, n, sample_count, seed)
        vnorm = fractional_norms(fields, eigenvalues(op, n), alpha)
        for s in range(sample_count):
            hs = hs_norm_B(pair, SpectralField(op, fields[s]), spec, alpha, n, op)
            ratios[a, s] = hs / (1.0 + vnorm[s])
    max_ratio = ratios.max(axis=1)
    if len(n_list) > 1:
        slope = float(np.polyfit(np.log(n_list), np.log(max_ratio**2), 1)[0])
    else:
        slope = 0.0
    ref = None
    if equivalence_constant is not None:
        ref = growth_reference_constant(pair, spec, alpha, equivalence_constant)
    return GrowthReport(
        alpha, n_list, tuple(float(m) for m in max_ratio), ratios, slope, ref, abs(slope) <= slope_tol
    )


@dataclass(frozen=True)
class BoundaryReport:
    left_limit: float  # extrapolated b(x, x) as x -> 0
    right_limit: float  # extrapolated b(x, x - 1) as x -> 1
    passed: bool


def boundary_compat_check(pair: NemytskiiPair, tol: float = 1e-6, d: int = 1) -> BoundaryReport:
    """Limits of b along the diagonal traces at both ends of the interval.

    Evaluates on ``s = 2^-k`` and extrapolates linearly (Richardson) to s = 0.
    """
    s = 2.0 ** -np.arange(10, 31)
    x_left = np.repeat(s[:, None], d, axis=1)
    x_right = np.repeat((1.0 - s)[:, None], d, axis=1)
    left = pair.b_values(x_left, s)
    right = pair.b_values(x_right, -s)
    # b(s) ~ L + c s  =>  L ~ 2 b(s) - b(2s)
    l_lim = float(2 * left[-1] - left[-2])
    r_lim = float(2 * right[-1] - right[-2])
    ok = abs(l_lim) <= tol and abs(r_lim) <= tol and np.all(np.isfinite(left)) and np.all(np.isfinite(right))
    return BoundaryReport(l_lim, r_lim, bool(ok))


@dataclass(frozen=True)
class LipschitzReport:
    max_b_ratio: float  # max |db| / (|dx| + |dy|), to be <= q
    max_f_ratio: float  # max |df| / |dy| at fixed x, to be <= lip_f
    l2_b0: float  # int |b(x, 0)|^2 dx, to be <= q^2
    passed: bool


def lipschitz_spot_check(
    pair: NemytskiiPair, n_pairs: int = 10000, d: int = 1, y_scale: float = 5.0, seed: int = 0
) -> LipschitzReport:
    gen = np.random.default_rng(seed)
    x1, x2 = gen.random((n_pairs, d)), gen.random((n_pairs, d))
    y1, y2 = y_scale * gen.standard_normal(n_pairs), y_scale * gen.standard_normal(n_pairs)
    db = np.abs(pair.b_values(x1, y1) - pair.b_values(x2, y2))
    dist = np.linalg.norm(x1 - x2, axis=1) + np.abs(y1 - y2)
    b_ratio = float(np.max(db / dist))
    df = np.abs(pair.f_values(x1, y1) - pair.f_values(x1, y2))
    f_ratio = float(np.max(df / np.abs(y1 - y2)))
    _, pts, w = _gauss_nodes(64, d)
    l2 = float(np.sum(pair.b_values(pts, 0.0) ** 2 * w))
    tol = 1e-12
    ok = b_ratio <= pair.q + tol and f_ratio <= pair.lip_f + tol and l2 <= pair.q**2 + tol
    return LipschitzReport(b_ratio, f_ratio, l2, bool(ok))
