"""Single-mode position distribution of a truncated density matrix and its CDF.

In natural units (hbar = 1) the density of a single-mode state ``rho`` is
``p(x) = Q(x) exp(-x^2)`` with a polynomial ``Q``, and the CDF has the closed form

    F(t) = (erf(t) + 1) / 2 - exp(-t^2) A(t)

for another polynomial ``A``. Coefficients are stored lowest degree first.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial, pi, sqrt

import numpy as np
from scipy import optimize, special

from ..errors import InvalidStateError, PathologicalDistributionError, UsageError
from ..fock import DensityMatrix
from . import _kernels
from .hermite import hermite_coefficients, hermite_product_table

ERF_APPROX_MAX_ERROR = 2.5e-5
CDF_SLACK = 5e-5
NEGATIVE_DENSITY_ATOL = 1e-10

ROOT_XTOL = 1e-12
ROOT_RTOL = 4 * np.finfo(float).eps
ROOT_FTOL = 1e-10
ROOT_MAXITER = 200
BRACKET_CAP = 64.0


@dataclass(frozen=True, eq=False)
class ModeDistribution:
    q_coeffs: np.ndarray
    a_coeffs: np.ndarray
    hbar: float = 1.0

    @property
    def cutoff(self) -> int:
        return (len(self.q_coeffs) + 1) // 2

    def density(self, t):
        """Natural-unit probability density ``Q(t) exp(-t^2)``."""
        t = np.asarray(t, dtype=float)
        return np.polynomial.polynomial.polyval(t, self.q_coeffs) * np.exp(-t * t)

    def validate(self, grid=None) -> None:
        if grid is None:
            grid = np.linspace(-12.0, 12.0, 4001)
        worst = float(np.min(self.density(grid)))
        if worst < -NEGATIVE_DENSITY_ATOL:
            raise InvalidStateError(f"density is negative ({worst:.3e}) somewhere on the grid")
        if len(self.a_coeffs) > max(1, 2 * self.cutoff - 1):
            raise InvalidStateError("A polynomial has too high a degree")


@lru_cache(maxsize=None)
def _antiderivative_matrix(cutoff: int) -> np.ndarray:
    """Linear map from ``Q`` coefficients to ``A`` coefficients.

    ``int_{-inf}^t x^k e^{-x^2} dx = g_k sqrt(pi)/2 (1 + erf t) - e^{-t^2} P_k(t)``
    with ``P_0 = 0``, ``P_1 = 1/2`` and ``P_k = t^{k-1}/2 + (k-1)/2 P_{k-2}``.
    """
    nq = 2 * cutoff - 1
    na = max(1, nq - 1)
    polys = [np.zeros(na) for _ in range(nq)]
    if nq > 1:
        polys[1][0] = 0.5
    for k in range(2, nq):
        p = 0.5 * (k - 1) * polys[k - 2]
        p[k - 1] += 0.5
        polys[k] = p
    mat = np.stack(polys, axis=1)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def _gaussian_moments(cutoff: int) -> np.ndarray:
    """``int x^k e^{-x^2} dx`` over the real line for ``k < 2 cutoff - 1``."""
    nq = 2 * cutoff - 1
    g = np.zeros(nq)
    g[0] = sqrt(pi)
    for k in range(2, nq, 2):
        g[k] = g[k - 2] * (k - 1) / 2
    return g


def q_coefficients(rho1: np.ndarray) -> np.ndarray:
    cutoff = rho1.shape[-1]
    return np.einsum("...nm,nmk->...k", rho1.real, hermite_product_table(cutoff))


def a_from_q(q: np.ndarray, cutoff: int) -> np.ndarray:
    return q @ _antiderivative_matrix(cutoff).T


def mode_distribution(rho1: DensityMatrix | np.ndarray, hbar: float = 1.0) -> ModeDistribution:
    """Polynomials ``Q`` and ``A`` of a normalized single-mode density matrix."""
    entries = rho1.entries if isinstance(rho1, DensityMatrix) else np.asarray(rho1)
    if isinstance(rho1, DensityMatrix) and rho1.modes != 1:
        raise UsageError(f"expected a single-mode density matrix, got {rho1.modes} modes")
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise UsageError(f"expected a square matrix, got shape {entries.shape}")
    q = q_coefficients(entries)
    return ModeDistribution(q, a_from_q(q, entries.shape[0]), float(hbar))


def total_mass(dist: ModeDistribution) -> float:
    """``int Q(x) e^{-x^2} dx``; equals the trace of the source matrix."""
    return float(dist.q_coeffs @ _gaussian_moments(dist.cutoff))


def _poly_int(coeffs) -> np.ndarray:
    return np.array([int(c) for c in coeffs], dtype=object)


def _bc_term(n: int, m: int) -> np.ndarray:
    """``B_{n,m}`` for ``n <= m`` as float coefficients (convolution form)."""
    length = n + m
    total = np.zeros(max(length, 1), dtype=object)
    for k in range(n):
        conv = np.convolve(_poly_int(hermite_coefficients(n - k)), _poly_int(hermite_coefficients(m - k - 1)))
        scaled = conv * (2**k) * factorial(n) // factorial(n - k)
        total[: len(scaled)] += scaled
    if m != n:
        extra = _poly_int(hermite_coefficients(m - n - 1)) * (factorial(n) * 2**n)
        total[: len(extra)] += extra
    norm = sqrt(float(2 ** (n + m) * factorial(n) * factorial(m)) * pi)
    return np.array([float(c) for c in total]) / norm


@lru_cache(maxsize=None)
def b_table(cutoff: int) -> np.ndarray:
    """``B[n, m]`` padded to the length of the ``A`` polynomial.

    The convolution formula is valid for ``n <= m``; the integrand is symmetric
    in ``(n, m)`` so ``B[m, n] = B[n, m]``.
    """
    na = max(1, 2 * cutoff - 2)
    out = np.zeros((cutoff, cutoff, na))
    for n in range(cutoff):
        for m in range(n, cutoff):
            term = _bc_term(n, m)
            out[n, m, : len(term)] = term
            out[m, n] = out[n, m]
    out.setflags(write=False)
    return out


def a_coefficients_closed_form(rho1: DensityMatrix | np.ndarray) -> np.ndarray:
    """``A = sum_{n,m} Re(rho_nm) B_{n,m}`` via the Hermite convolution tables."""
    entries = rho1.entries if isinstance(rho1, DensityMatrix) else np.asarray(rho1)
    return np.einsum("nm,nmk->k", entries.real, b_table(entries.shape[0]))


def erf_approx(t):
    """Rational approximation 7.1.25 of Abramowitz & Stegun, odd by construction.

    Absolute error is below 2.5e-5 everywhere.
    """
    t = np.asarray(t, dtype=float)
    x = np.abs(t)
    tau = 1.0 / (1.0 + _kernels.AS_P * x)
    poly = tau * (_kernels.AS_A1 + tau * (_kernels.AS_A2 + tau * _kernels.AS_A3))
    value = np.sign(t) * (1.0 - poly * np.exp(-x * x))
    return float(value) if value.ndim == 0 else value


def erf_exact(t):
    return special.erf(t)


def _cdf_raw(dist: ModeDistribution, t: float, exact_erf: bool) -> float:
    return _kernels.cdf_value(dist.a_coeffs, float(t), exact_erf)


def cdf_eval(dist: ModeDistribution, t, exact_erf: bool = False):
    """``F(t)`` at natural-unit ``t``, clamped to ``[0, 1]``."""
    t_arr = np.asarray(t, dtype=float)
    values = np.array([_cdf_raw(dist, x, exact_erf) for x in t_arr.reshape(-1)])
    values = np.clip(values, 0.0, 1.0).reshape(t_arr.shape)
    return float(values) if values.ndim == 0 else values


def find_bracket(dist: ModeDistribution, alpha: float, exact_erf: bool = False):
    lo, hi = -1.0, 1.0
    while True:
        if _cdf_raw(dist, lo, exact_erf) <= alpha <= _cdf_raw(dist, hi, exact_erf):
            return lo, hi
        if hi >= BRACKET_CAP:
            raise PathologicalDistributionError(
                f"no root bracket for alpha={alpha!r} within |t| <= {BRACKET_CAP:g}"
            )
        lo, hi = 2 * lo, 2 * hi


def invert_cdf(dist: ModeDistribution, alpha: float, exact_erf: bool = False) -> float:
    """Natural-unit ``t`` with ``F(t) = alpha`` (scipy's Brent solver)."""
    if not 0.0 < alpha < 1.0:
        raise UsageError(f"alpha must lie in (0, 1), got {alpha!r}")
    lo, hi = find_bracket(dist, alpha, exact_erf)
    return optimize.brentq(
        lambda x: _cdf_raw(dist, x, exact_erf) - alpha,
        lo,
        hi,
        xtol=ROOT_XTOL,
        rtol=ROOT_RTOL,
        maxiter=ROOT_MAXITER,
    )
