"""Compiled inner loops of the homodyne sampler."""

import math
import os

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # the system TBB is often too old for numba; skip straight to OpenMP
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# Abramowitz & Stegun 7.1.25
AS_P = 0.47047
AS_A1 = 0.3480242
AS_A2 = -0.0958798
AS_A3 = 0.7478556

STATUS_OK = 0
STATUS_NO_BRACKET = 1
STATUS_NO_CONVERGENCE = 2


@numba.njit(cache=True)
def erfc_scaled_as(x):
    """``erfc(x) * exp(x^2)`` for ``x >= 0`` from the 7.1.25 rational form."""
    tau = 1.0 / (1.0 + AS_P * x)
    return tau * (AS_A1 + tau * (AS_A2 + tau * AS_A3))


@numba.njit(cache=True)
def horner(coeffs, t):
    acc = 0.0
    for k in range(coeffs.shape[0] - 1, -1, -1):
        acc = acc * t + coeffs[k]
    return acc


@numba.njit(cache=True)
def cdf_value(a_coeffs, t, exact):
    """``(erf(t) + 1)/2 - exp(-t^2) A(t)`` without cancellation in either tail."""
    g = math.exp(-t * t)
    poly = horner(a_coeffs, t)
    if exact:
        if t < 0.0:
            return 0.5 * math.erfc(-t) - g * poly
        return 1.0 - 0.5 * math.erfc(t) - g * poly
    if t < 0.0:
        return g * (0.5 * erfc_scaled_as(-t) - poly)
    return 1.0 - g * (0.5 * erfc_scaled_as(t) + poly)


@numba.njit(cache=True)
def _bracket(a_coeffs, alpha, exact, cap):
    lo, hi = -1.0, 1.0
    while True:
        flo = cdf_value(a_coeffs, lo, exact) - alpha
        fhi = cdf_value(a_coeffs, hi, exact) - alpha
        if flo <= 0.0 and fhi >= 0.0:
            return lo, hi, flo, fhi, True
        if hi >= cap:
            return lo, hi, flo, fhi, False
        lo *= 2.0
        hi *= 2.0


@numba.njit(cache=True)
def brent_root(a_coeffs, alpha, exact, xtol, rtol, ftol, maxiter, cap):
    """Solve ``F(t) = alpha`` by Brent's method; returns ``(t, status)``.

    The iteration follows scipy's ``brentq`` with an additional stop once
    ``|F(t) - alpha| <= ftol``.
    """
    xpre, xcur, fpre, fcur, ok = _bracket(a_coeffs, alpha, exact, cap)
    if not ok:
        return np.nan, STATUS_NO_BRACKET
    if fpre == 0.0:
        return xpre, STATUS_OK
    if fcur == 0.0:
        return xcur, STATUS_OK
    xblk = 0.0
    fblk = 0.0
    spre = 0.0
    scur = 0.0
    for _ in range(maxiter):
        if fpre != 0.0 and fcur != 0.0 and (fpre < 0.0) != (fcur < 0.0):
            xblk = xpre
            fblk = fpre
            spre = scur = xcur - xpre
        if abs(fblk) < abs(fcur):
            xpre = xcur
            xcur = xblk
            xblk = xpre
            fpre = fcur
            fcur = fblk
            fblk = fpre
        delta = 0.5 * (xtol + rtol * abs(xcur))
        sbis = 0.5 * (xblk - xcur)
        if fcur == 0.0 or abs(sbis) < delta or abs(fcur) <= ftol:
            return xcur, STATUS_OK
        if abs(spre) > delta and abs(fcur) < abs(fpre):
            if xpre == xblk:
                stry = -fcur * (xcur - xpre) / (fcur - fpre)
            else:
                dpre = (fpre - fcur) / (xpre - xcur)
                dblk = (fblk - fcur) / (xblk - xcur)
                stry = -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            if 2.0 * abs(stry) < min(abs(spre), 3.0 * abs(sbis) - delta):
                spre = scur
                scur = stry
            else:
                spre = sbis
                scur = sbis
        else:
            spre = sbis
            scur = sbis
        xpre = xcur
        fpre = fcur
        if abs(scur) > delta:
            xcur += scur
        elif sbis > 0.0:
            xcur += delta
        else:
            xcur -= delta
        fcur = cdf_value(a_coeffs, xcur, exact) - alpha
    return xcur, STATUS_NO_CONVERGENCE


@numba.njit(cache=True, parallel=True)
def solve_quantiles(a_rows, alphas, exact, xtol, rtol, ftol, maxiter, cap, roots, status):
    """Row-wise ``F_s(t_s) = alpha_s``; ``a_rows`` holds one A polynomial per shot."""
    for s in numba.prange(alphas.shape[0]):
        roots[s], status[s] = brent_root(
            a_rows[s], alphas[s], exact, xtol, rtol, ftol, maxiter, cap
        )


@numba.njit(cache=True)
def contract_level(rho, prefix, last, weights, cutoff, out):
    """Condition the last mode of ``rho`` on previously sampled modes.

    ``rho`` is the reduced density matrix of the first ``i`` modes in the
    compact basis; ``prefix[r]``/``last[r]`` split basis state ``r`` into the
    index of its first ``i - 1`` occupations and its last occupation.
    ``weights[s, p]`` is the product of wavefunctions at shot ``s``'s samples for
    prefix ``p``. Writes the unnormalized single-mode matrices to ``out``.
    """
    n = rho.shape[0]
    v = np.empty(n)
    tmp = np.empty((n, cutoff), dtype=np.complex128)
    for s in range(weights.shape[0]):
        for r in range(n):
            v[r] = weights[s, prefix[r]]
        tmp[:, :] = 0.0
        for r in range(n):
            if v[r] == 0.0:
                continue
            for q in range(n):
                tmp[r, last[q]] += rho[r, q] * v[q]
        for l in range(cutoff):
            for m in range(cutoff):
                out[s, l, m] = 0.0
        for r in range(n):
            vr = v[r]
            if vr == 0.0:
                continue
            lr = last[r]
            for m in range(cutoff):
                out[s, lr, m] += vr * tmp[r, m]
