import math

import numpy as np
import pytest
from scipy import special

from cvborn.fock import CutoffSpec, DensityMatrix, FockIndexMap


def random_single_mode_rho(cutoff, rng, rank=None):
    """Random normalized PSD matrix of size ``cutoff`` (Wishart construction)."""
    rank = cutoff if rank is None else rank
    g = rng.normal(size=(cutoff, rank)) + 1j * rng.normal(size=(cutoff, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_density(modes, cutoff, rng, rank=None):
    imap = FockIndexMap.of(modes, cutoff)
    rank = imap.dim if rank is None else rank
    g = rng.normal(size=(imap.dim, rank)) + 1j * rng.normal(size=(imap.dim, rank))
    rho = g @ g.conj().T
    return DensityMatrix(imap, rho / np.trace(rho).real)


def oracle_psi(n, x):
    """Natural-unit oscillator eigenfunction from scipy's physicists' Hermite."""
    x = np.asarray(x, dtype=float)
    norm = 1.0 / math.sqrt(2.0**n * math.factorial(n) * math.sqrt(math.pi))
    return norm * special.eval_hermite(n, x) * np.exp(-x * x / 2)


def oracle_joint_density(rho: DensityMatrix, points):
    """Born-rule density ``<x|rho|x>`` at natural-unit points of shape (k, d)."""
    points = np.atleast_2d(points)
    basis = rho.index_map.basis
    psi = np.ones((len(points), len(basis)))
    for col, occ in enumerate(basis):
        for j, n in enumerate(occ):
            psi[:, col] *= oracle_psi(n, points[:, j])
    return np.einsum("kn,nm,km->k", psi, rho.entries, psi).real


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def spec22():
    return CutoffSpec(2, 2)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
