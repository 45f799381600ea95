"""Physicists' Hermite polynomials and harmonic-oscillator wavefunctions."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial, pi, sqrt

import numpy as np

from ..errors import UsageError


@lru_cache(maxsize=None)
def hermite_coefficients(n: int) -> tuple[int, ...]:
    """Exact monomial coefficients of ``H_n``, lowest degree first.

    Uses ``H_{n+1} = 2x H_n - 2n H_{n-1}``.
    """
    if n < 0:
        raise UsageError(f"Hermite degree must be >= 0, got {n}")
    if n == 0:
        return (1,)
    if n == 1:
        return (0, 2)
    prev, cur = hermite_coefficients(n - 2), hermite_coefficients(n - 1)
    out = [0] * (n + 1)
    for k, c in enumerate(cur):
        out[k + 1] += 2 * c
    for k, c in enumerate(prev):
        out[k] -= 2 * (n - 1) * c
    return tuple(out)


@dataclass(frozen=True)
class HermiteTable:
    max_degree: int
    coefficients: tuple[tuple[int, ...], ...]

    @classmethod
    def build(cls, max_degree: int) -> "HermiteTable":
        return cls(max_degree, tuple(hermite_coefficients(n) for n in range(max_degree + 1)))

    def __getitem__(self, n: int) -> tuple[int, ...]:
        return self.coefficients[n]


@lru_cache(maxsize=None)
def normalized_hermite(cutoff: int) -> np.ndarray:
    """Row ``n`` holds the coefficients of ``H_n / sqrt(2^n n! sqrt(pi))``."""
    out = np.zeros((cutoff, cutoff))
    for n in range(cutoff):
        norm = sqrt(float(2**n * factorial(n)) * sqrt(pi))
        out[n, : n + 1] = np.array(hermite_coefficients(n), dtype=float) / norm
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def hermite_product_table(cutoff: int) -> np.ndarray:
    """``T[n, m]`` = coefficients of ``h_n h_m`` (degree ``2 cutoff - 2``).

    With it the density polynomial is ``Q = sum_{n,m} Re(rho_nm) T[n, m]``.
    """
    h = normalized_hermite(cutoff)
    out = np.zeros((cutoff, cutoff, 2 * cutoff - 1))
    for n in range(cutoff):
        for m in range(n, cutoff):
            out[n, m] = out[m, n] = np.convolve(h[n], h[m])
    out.setflags(write=False)
    return out


def wavefunctions(cutoff: int, x) -> np.ndarray:
    """``psi_n(x)`` for ``n < cutoff`` in natural units, shape ``x.shape + (cutoff,)``.

    Evaluated by the normalized three-term recurrence, which stays finite for
    large ``n`` where the monomial form overflows.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (cutoff,))
    out[..., 0] = pi**-0.25 * np.exp(-0.5 * x * x)
    if cutoff > 1:
        out[..., 1] = sqrt(2.0) * x * out[..., 0]
    for n in range(1, cutoff - 1):
        out[..., n + 1] = sqrt(2.0 / (n + 1)) * x * out[..., n] - sqrt(n / (n + 1)) * out[..., n - 1]
    return out


def wavefunction(n: int, x, hbar: float = 1.0):
    """Position wavefunction ``<x|n>`` at physical coordinate ``x``.

    ``psi_n(x) = (pi hbar)^(-1/4) (2^n n!)^(-1/2) exp(-x^2 / 2hbar) H_n(x / sqrt(hbar))``.
    """
    if n < 0:
        raise UsageError(f"n must be >= 0, got {n}")
    if hbar <= 0:
        raise UsageError(f"hbar must be positive, got {hbar}")
    x = np.asarray(x, dtype=float)
    values = wavefunctions(n + 1, x / sqrt(hbar))[..., n] * hbar**-0.25
    return float(values) if values.ndim == 0 else values
