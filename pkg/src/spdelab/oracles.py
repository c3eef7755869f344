"""Exact second moments of the stochastic convolution for additive-type noise.

With ``f = 0`` and a diffusion that maps the noise onto the sine basis
linearly, every Galerkin mode ``k`` is an Ornstein-Uhlenbeck process driven
with intensity ``w_k`` (the mode weight).  Then

    E ||O_t||^2_{V_g} = sum_k w_k lam_k^{2g} (1 - e^{-2 lam_k t}) / (2 lam_k)

and the increment moments follow from the OU covariance.  Supported noise
maps (``kind``):

``commutative``      sine-basis noise, ``b = c``: ``w_j = c^2 mu_j``.
``cosine-additive``  cosine noise, ``b = c``:
                     ``w_k = c^2 sum_j mu_j <e_k, g_j>^2`` where for ``k + j`` odd
                     ``<e_k, g_j> = 4k / (pi (k^2 - j^2))`` and 0 otherwise.
``boundary-sine``    cosine noise, ``b = sin(pi x)``:
                     ``sin(pi x) g_j = (e_{j+1} - e_{j-1}) / 2`` so
                     ``w_k = (mu_{k-1} + mu_{k+1}) / 4`` (with ``mu_0 = 0``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from spdelab.noise_model import CovarianceSpectrum
from spdelab.spectral_space import OperatorSpec, SpectralField, eigenvalues

__all__ = [
    "KINDS",
    "OracleValue",
    "sine_cosine_inner",
    "mode_weights",
    "ou_oracle_moment",
    "ou_oracle_time_increment",
    "oracle_kind",
    "series_exponent",
]

KINDS = ("commutative", "cosine-additive", "boundary-sine")
# untruncated series are summed to 2^level modes per dimension
_FULL_LEVELS = {"commutative": 16, "boundary-sine": 16, "cosine-additive": 13}
_FULL_LEVELS_2D = 9


def sine_cosine_inner(k: np.ndarray, j: np.ndarray) -> np.ndarray:
    """``<e_k, g_j>`` in L2(0,1) for ``e_k = sqrt2 sin(k pi x)`` and the cosine family."""
    k = np.asarray(k, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    k, j = np.broadcast_arrays(k, j)
    out = np.zeros(k.shape)
    odd = ((k + j) % 2) == 1
    zero = odd & (j == 0)
    rest = odd & (j != 0)
    out[zero] = 2.0 * math.sqrt(2.0) / (math.pi * k[zero])
    out[rest] = 4.0 * k[rest] / (math.pi * (k[rest] ** 2 - j[rest] ** 2))
    return out


def oracle_kind(spec: CovarianceSpectrum, b: str) -> str:
    """Map a noise spectrum and a diffusion expression to an oracle kind."""
    from spdelab.coefficients import NemytskiiPair

    text = b.replace(" ", "")
    if text == "sin(pi*x)" and spec.eigenbasis == "cosine":
        return "boundary-sine"
    if NemytskiiPair(b=b).b_constant is None:
        raise ValueError(f"no exact oracle for b = {b!r}")
    return "commutative" if spec.eigenbasis == "sine" else "cosine-additive"


def mode_weights(
    spec: CovarianceSpectrum, kind: str, n_modes: int, J: int, b_scale: float = 1.0
) -> np.ndarray:
    """Noise intensity of each Galerkin mode, shape (n_modes,)*d."""
    return _cached_weights(spec, kind, int(n_modes), int(J), float(b_scale)).copy()


@lru_cache(maxsize=64)
def _cached_weights(spec, kind, n_modes, J, b_scale):
    if kind not in KINDS:
        raise ValueError(f"unknown oracle kind {kind!r}; choose from {KINDS}")
    if kind == "commutative":
        if spec.eigenbasis != "sine":
            raise ValueError("commutative oracle needs sine-basis noise")
        w = np.zeros((n_modes,) * spec.d)
        m = min(n_modes, J)
        sub = spec.mu_array(m).reshape((m,) * spec.d)
        w[(slice(0, m),) * spec.d] = sub
        return b_scale**2 * w
    if spec.eigenbasis != "cosine" or spec.d != 1:
        raise ValueError(f"{kind} oracle needs one-dimensional cosine noise")
    mu = np.concatenate([[0.0], spec.mu_array(J), [0.0]])  # mu[0] = 0, mu[J+1] = 0
    k = np.arange(1, n_modes + 1)
    if kind == "boundary-sine":
        lower = mu[k - 1]
        upper = np.where(k + 1 <= J, mu[np.minimum(k + 1, J + 1)], 0.0)
        return (lower + upper) / 4.0
    # <e_k, g_j> vanishes unless k + j is odd, so odd k pair with even j and vice versa
    w = np.empty(n_modes)
    j = np.arange(1, J + 1, dtype=np.float64)
    mu_j = mu[1 : J + 1]
    for parity in (0, 1):
        ks = k[k % 2 == parity].astype(np.float64)
        sel = (np.arange(1, J + 1) % 2) != parity
        jj, mj = j[sel] ** 2, mu_j[sel]
        for lo in range(0, ks.shape[0], 256):
            kb = ks[lo : lo + 256, None]
            denom = kb * kb - jj[None, :]
            w[kb[:, 0].astype(np.int64) - 1] = (16.0 / math.pi**2) * kb[:, 0] ** 2 * np.sum(mj / (denom * denom), axis=1)
    return b_scale**2 * w


def _terms(lam, w, gamma, t):
    if t == 0:
        return np.zeros_like(lam)
    factor = 0.5 / lam if math.isinf(t) else -np.expm1(-2.0 * lam * t) / (2.0 * lam)
    return w * lam ** (2.0 * gamma) * factor


def _increment_terms(lam, w, r, t, h):
    if h == 0:
        return np.zeros_like(lam)
    var_t = 0.5 / lam if math.isinf(t) else -np.expm1(-2.0 * lam * t) / (2.0 * lam)
    term = np.expm1(-lam * h) ** 2 * var_t - np.expm1(-2.0 * lam * h) / (2.0 * lam)
    return w * lam ** (2.0 * r) * term


def series_exponent(spec: CovarianceSpectrum, kind: str, gamma: float, finite_noise: bool = False) -> float:
    """Power of ``n`` in the shell contributions of the untruncated series (t > 0).

    The series converges iff this is below -1.  With finitely many noise
    modes only the cosine family still feeds infinitely many sine modes.
    """
    d, rho = spec.d, spec.rho
    if finite_noise:
        return 4.0 * gamma - 4.0 if kind == "cosine-additive" else -math.inf
    if kind == "commutative":
        return 4.0 * gamma - 2.0 - rho + (d - 1)
    if kind == "boundary-sine":
        return 4.0 * gamma - 2.0 - rho
    # cosine-additive: w_k ~ k^-2 from low j plus mu_k from j near k
    return 4.0 * gamma - 2.0 - min(2.0, rho)


@dataclass(frozen=True)
class OracleValue:
    value: float  # truncated sum (the full sum when convergent and untruncated)
    tail_bound: float  # estimated remainder beyond the summed modes; inf when divergent
    divergent: bool
    growth_rate: float  # d log S / d log n over the last octave of partial sums
    n_modes: int  # modes per dimension actually summed


def _shell_sums(terms: np.ndarray, levels: list[int]) -> np.ndarray:
    """Partial sums over the cubes {1..n}^d for n in levels."""
    out = []
    for n in levels:
        out.append(float(np.sum(terms[(slice(0, n),) * terms.ndim])))
    return np.array(out)


def _evaluate(spec, op, kind, n_modes, J, terms_fn, gamma_for_exponent, b_scale, initial_terms):
    d = spec.d
    if n_modes is not None:
        K = n_modes
        J_eff = spec.truncation(K) if J is None else J
    else:
        K = 2 ** (_FULL_LEVELS[kind] if d == 1 else _FULL_LEVELS_2D)
        J_eff = J if J is not None else (spec.n_noise if spec.n_noise is not None else K)
    lam = eigenvalues(op, K)
    w = mode_weights(spec, kind, K, J_eff, b_scale)
    terms = terms_fn(lam, w)
    if initial_terms is not None:
        terms = terms + initial_terms(K)
    levels = [2**m for m in range(1, int(math.log2(K)) + 1)]
    if K not in levels:
        levels.append(K)
    sums = _shell_sums(terms, levels)
    total = float(np.sum(terms))
    if len(sums) >= 2 and sums[-2] > 0 and sums[-1] > 0:
        growth = float(math.log(sums[-1] / sums[-2]) / math.log(levels[-1] / levels[-2]))
    else:
        growth = 0.0
    divergent = series_exponent(spec, kind, gamma_for_exponent, finite_noise=J_eff < K) >= -1.0
    if n_modes is not None:
        return OracleValue(total, 0.0, False, growth, K)
    if divergent:
        return OracleValue(total, math.inf, True, growth, K)
    tail = 0.0
    if len(sums) >= 3:
        d1, d2 = sums[-1] - sums[-2], sums[-2] - sums[-3]
        if d2 > 0 and 0 < d1 < d2:
            q = d1 / d2
            tail = float(d1 * q / (1.0 - q))
    return OracleValue(total, tail, False, growth, K)


def ou_oracle_moment(
    spec: CovarianceSpectrum,
    op: OperatorSpec,
    gamma: float,
    t: float,
    kind: str,
    n_modes: int | None = None,
    J: int | None = None,
    b_scale: float = 1.0,
    initial: SpectralField | None = None,
) -> OracleValue:
    """Exact ``E ||X_t||^2_{V_gamma}`` for ``X_0 = initial`` (default 0).

    With ``n_modes`` the Galerkin-truncated value is returned exactly;
    otherwise the series is summed far out with a tail estimate, or flagged
    divergent (``t = inf`` gives the stationary value).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    _check_op(spec, op)
    init = _initial_terms(initial, op, lambda lam, a: lam ** (2 * gamma) * (a * np.exp(-lam * t)) ** 2)
    return _evaluate(
        spec, op, kind, n_modes, J, lambda lam, w: _terms(lam, w, gamma, t),
        gamma if t > 0 else -math.inf, b_scale, init,
    )


def ou_oracle_time_increment(
    spec: CovarianceSpectrum,
    op: OperatorSpec,
    r: float,
    t: float,
    h: float,
    kind: str,
    n_modes: int | None = None,
    J: int | None = None,
    b_scale: float = 1.0,
    initial: SpectralField | None = None,
) -> OracleValue:
    """Exact ``E ||X_{t+h} - X_t||^2_{V_r}``."""
    if h < 0 or t < 0:
        raise ValueError("t and h must be >= 0")
    _check_op(spec, op)
    init = _initial_terms(
        initial, op, lambda lam, a: lam ** (2 * r) * (np.expm1(-lam * h) * np.exp(-lam * t) * a) ** 2
    )
    return _evaluate(
        spec, op, kind, n_modes, J, lambda lam, w: _increment_terms(lam, w, r, t, h),
        r if h > 0 else -math.inf, b_scale, init,
    )


def _check_op(spec, op):
    if op.d != spec.d:
        raise ValueError("operator and noise dimensions differ")


def _initial_terms(initial, op, fn):
    if initial is None:
        return None

    def terms(K):
        lam = eigenvalues(op, K)
        a = np.zeros((K,) * op.d)
        n = min(K, initial.n_modes)
        a[(slice(0, n),) * op.d] = initial.coeffs[(slice(0, n),) * op.d]
        return fn(lam, a)

    return terms
