"""One-dimensional fast Gauss transform.

Sums ``sum_{i,j} exp(-(y_j - x_i)^2 / h^2)`` through Hermite expansions of the
sources about box centres::

    exp(-(z - u)^2) = sum_n u^n / n! * H_n(z) exp(-z^2)

with ``z = (y - c) / h`` and ``u = (x - c) / h``. Boxes have width ``h / 2``,
so ``|u| <= 1/4``; with 30 terms and sources ignored beyond ``6.5 h`` the
relative error of a full double sum is below 1e-13.
"""

import math

import numba
import numpy as np

ORDER = 30
BOX_WIDTH = 0.5
RADIUS = 6.5


@numba.njit(cache=True)
def _moments(x, lo, nboxes, order):
    mom = np.zeros((nboxes, order))
    for i in range(x.shape[0]):
        b = int((x[i] - lo) / BOX_WIDTH)
        if b >= nboxes:
            b = nboxes - 1
        u = x[i] - (lo + (b + 0.5) * BOX_WIDTH)
        term = 1.0
        for n in range(order):
            mom[b, n] += term
            term *= u / (n + 1)
    return mom


@numba.njit(cache=True)
def _evaluate(y, mom, lo, order):
    nboxes = mom.shape[0]
    reach = int(RADIUS / BOX_WIDTH) + 1
    herm = np.empty(order)
    total = 0.0
    for j in range(y.shape[0]):
        b0 = int(math.floor((y[j] - lo) / BOX_WIDTH))
        acc = 0.0
        for b in range(max(0, b0 - reach), min(nboxes, b0 + reach + 1)):
            z = y[j] - (lo + (b + 0.5) * BOX_WIDTH)
            if abs(z) > RADIUS + BOX_WIDTH:
                continue
            g = math.exp(-z * z)
            herm[0] = g
            if order > 1:
                herm[1] = 2.0 * z * g
            for n in range(1, order - 1):
                herm[n + 1] = 2.0 * z * herm[n] - 2.0 * n * herm[n - 1]
            s = 0.0
            for n in range(order):
                s += mom[b, n] * herm[n]
            acc += s
        total += acc
    return total


def gauss_sum_1d(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """``sum_{i,j} exp(-(x_i - y_j)^2 / (2 sigma^2))`` for 1-D samples."""
    h = math.sqrt(2.0) * sigma
    xs = np.ascontiguousarray(np.asarray(x, dtype=float).reshape(-1) / h)
    ys = np.ascontiguousarray(np.asarray(y, dtype=float).reshape(-1) / h)
    if xs.size == 0 or ys.size == 0:
        return 0.0
    lo = float(xs.min())
    nboxes = int((float(xs.max()) - lo) / BOX_WIDTH) + 1
    mom = _moments(xs, lo, nboxes, ORDER)
    return float(_evaluate(ys, mom, lo, ORDER))
