"""Weak simulation of homodyne (position) measurements on truncated Fock states."""

from .cdf import (
    ModeDistribution,
    a_coefficients_closed_form,
    cdf_eval,
    erf_approx,
    erf_exact,
    invert_cdf,
    mode_distribution,
)
from .hermite import HermiteTable, hermite_coefficients, wavefunction, wavefunctions
from .sampler import SampleMatrix, conditional_density, sample_homodyne, uniform_stream

__all__ = [
    "HermiteTable",
    "ModeDistribution",
    "SampleMatrix",
    "a_coefficients_closed_form",
    "cdf_eval",
    "conditional_density",
    "erf_approx",
    "erf_exact",
    "hermite_coefficients",
    "invert_cdf",
    "mode_distribution",
    "sample_homodyne",
    "uniform_stream",
    "wavefunction",
    "wavefunctions",
]
