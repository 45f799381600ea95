"""Truncated multimode Fock space.

States live in the span of occupation vectors ``n`` with ``sum(n) < cutoff``.
Basis states are ordered by total photon number first and lexicographically
within each total, e.g. for two modes and cutoff 3::

    (0,0), (0,1), (1,0), (0,2), (1,1), (2,0)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateStateError, DomainError, InvalidStateError, UsageError

HERMITIAN_ATOL = 1e-10
NORMALIZATION_ATOL = 1e-10
NEGATIVE_DIAGONAL_ATOL = 1e-12
DEGENERATE_TRACE = 1e-14


@dataclass(frozen=True)
class CutoffSpec:
    """Number of modes ``modes`` and exclusive total-photon bound ``cutoff``."""

    modes: int
    cutoff: int

    def __post_init__(self):
        if int(self.modes) != self.modes or self.modes < 1:
            raise UsageError(f"modes must be a positive integer, got {self.modes!r}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise UsageError(f"cutoff must be a positive integer, got {self.cutoff!r}")


def space_dimension(spec: CutoffSpec) -> int:
    """Dimension ``binom(d + c - 1, d)`` of the truncated space."""
    return comb(spec.modes + spec.cutoff - 1, spec.modes)


def _compositions(total: int, parts: int):
    # lexicographic order of non-negative integer vectors summing to `total`
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _basis_array(modes: int, cutoff: int) -> np.ndarray:
    rows = [v for total in range(cutoff) for v in _compositions(total, modes)]
    arr = np.array(rows, dtype=np.int64).reshape(len(rows), modes)
    arr.setflags(write=False)
    return arr


def enumerate_basis(spec: CutoffSpec) -> list[tuple[int, ...]]:
    """All occupation vectors of the truncated space in canonical order."""
    return [tuple(int(n) for n in row) for row in _basis_array(spec.modes, spec.cutoff)]


class FockIndexMap:
    """Bijection between occupation vectors and basis indices."""

    def __init__(self, spec: CutoffSpec):
        self.spec = spec
        self.basis = _basis_array(spec.modes, spec.cutoff)
        self._index = {tuple(int(n) for n in row): i for i, row in enumerate(self.basis)}

    @classmethod
    def of(cls, modes: int, cutoff: int) -> "FockIndexMap":
        return _index_map(modes, cutoff)

    @property
    def modes(self) -> int:
        return self.spec.modes

    @property
    def cutoff(self) -> int:
        return self.spec.cutoff

    @property
    def dim(self) -> int:
        return len(self.basis)

    def index_of(self, occupation: Sequence[int]) -> int:
        key = tuple(int(n) for n in occupation)
        try:
            return self._index[key]
        except KeyError:
            raise DomainError(
                f"occupation {key} is outside the truncated space "
                f"(modes={self.modes}, cutoff={self.cutoff})"
            ) from None

    def occupation_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dim:
            raise DomainError(f"basis index {index} out of range 0..{self.dim - 1}")
        return tuple(int(n) for n in self.basis[index])

    @property
    def dense_positions(self) -> np.ndarray:
        """Flat positions of the basis states inside a dense ``(c,)*d`` tensor."""
        return _dense_positions(self.modes, self.cutoff)

    def __eq__(self, other):
        return isinstance(other, FockIndexMap) and self.spec == other.spec

    def __hash__(self):
        return hash(self.spec)

    def __repr__(self):
        return f"FockIndexMap(modes={self.modes}, cutoff={self.cutoff})"


@lru_cache(maxsize=None)
def _index_map(modes: int, cutoff: int) -> FockIndexMap:
    return FockIndexMap(CutoffSpec(modes, cutoff))


@lru_cache(maxsize=None)
def _dense_positions(modes: int, cutoff: int) -> np.ndarray:
    basis = _basis_array(modes, cutoff)
    pos = np.ravel_multi_index(tuple(basis.T), (cutoff,) * modes)
    pos.setflags(write=False)
    return pos


def basis_index(index_map: FockIndexMap, occupation: Sequence[int]) -> int:
    return index_map.index_of(occupation)


@dataclass(frozen=True, eq=False)
class PureState:
    """State vector over the truncated basis.

    ``leakage`` is the norm lost to truncation while the state was prepared
    (zero for states built directly).
    """

    index_map: FockIndexMap
    amplitudes: np.ndarray
    leakage: float = field(default=0.0)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.index_map.dim,):
            raise UsageError(
                f"expected {self.index_map.dim} amplitudes, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @property
    def modes(self) -> int:
        return self.index_map.modes

    @property
    def cutoff(self) -> int:
        return self.index_map.cutoff

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "PureState":
        norm2 = self.norm_squared
        if norm2 <= DEGENERATE_TRACE:
            raise DegenerateStateError(f"state norm^2 {norm2:.3e} too small to normalize")
        return PureState(self.index_map, self.amplitudes / np.sqrt(norm2), self.leakage)

    def to_dense(self) -> np.ndarray:
        """Zero-padded tensor of shape ``(cutoff,) * modes``."""
        dense = np.zeros(self.cutoff**self.modes, dtype=np.complex128)
        dense[self.index_map.dense_positions] = self.amplitudes
        return dense.reshape((self.cutoff,) * self.modes)

    @classmethod
    def from_dense(cls, tensor: np.ndarray, leakage: float = 0.0) -> "PureState":
        modes = tensor.ndim
        cutoff = tensor.shape[0]
        imap = FockIndexMap.of(modes, cutoff)
        return cls(imap, tensor.reshape(-1)[imap.dense_positions], leakage)

    @classmethod
    def vacuum(cls, spec: CutoffSpec) -> "PureState":
        return cls.fock(spec, (0,) * spec.modes)

    @classmethod
    def fock(cls, spec: CutoffSpec, occupation: Sequence[int]) -> "PureState":
        imap = FockIndexMap.of(spec.modes, spec.cutoff)
        if len(occupation) != spec.modes:
            raise UsageError(f"occupation {tuple(occupation)} does not have {spec.modes} modes")
        amps = np.zeros(imap.dim, dtype=np.complex128)
        amps[imap.index_of(occupation)] = 1.0
        return cls(imap, amps)

    @classmethod
    def superposition(
        cls, spec: CutoffSpec, terms: Iterable[tuple[complex, Sequence[int]]]
    ) -> "PureState":
        """Normalized ``sum_k coeff_k |occ_k>``."""
        imap = FockIndexMap.of(spec.modes, spec.cutoff)
        amps = np.zeros(imap.dim, dtype=np.complex128)
        for coeff, occ in terms:
            amps[imap.index_of(occ)] += coeff
        return cls(imap, amps).normalized()


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix ``rho[i, j] = <n_i| rho |n_j>`` over the truncated basis."""

    index_map: FockIndexMap
    entries: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=np.complex128)
        dim = self.index_map.dim
        if rho.shape != (dim, dim):
            raise UsageError(f"expected a {dim}x{dim} matrix, got shape {rho.shape}")
        object.__setattr__(self, "entries", rho)

    @property
    def modes(self) -> int:
        return self.index_map.modes

    @property
    def cutoff(self) -> int:
        return self.index_map.cutoff

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def validate(self, require_normalized: bool = True) -> None:
        """Raise :class:`InvalidStateError` listing every violated invariant."""
        rho = self.entries
        problems = []
        herm = float(np.max(np.abs(rho - rho.conj().T), initial=0.0))
        if herm > HERMITIAN_ATOL:
            problems.append(f"not Hermitian (max deviation {herm:.3e})")
        diag = np.diag(rho)
        if np.any(np.abs(diag.imag) > HERMITIAN_ATOL):
            problems.append("diagonal has imaginary parts")
        if np.any(diag.real < -NEGATIVE_DIAGONAL_ATOL):
            problems.append(f"negative diagonal entry {diag.real.min():.3e}")
        if require_normalized and abs(self.trace - 1.0) > NORMALIZATION_ATOL:
            problems.append(f"trace {self.trace:.12g} != 1")
        if problems:
            raise InvalidStateError("; ".join(problems))


def outer_product(state: PureState) -> DensityMatrix:
    psi = state.amplitudes
    return DensityMatrix(state.index_map, np.outer(psi, psi.conj()))


def normalize(rho: DensityMatrix) -> DensityMatrix:
    tr = rho.trace
    if tr.real <= DEGENERATE_TRACE:
        raise DegenerateStateError(f"trace {tr.real:.3e} too small to normalize")
    return DensityMatrix(rho.index_map, rho.entries / tr.real)


@lru_cache(maxsize=None)
def _trace_plan(modes: int, cutoff: int, keep: tuple[int, ...]):
    """Index tables for tracing out the complement of ``keep``.

    Returns ``(kept_index, traced_key)`` per full basis state: the position of
    the kept occupations in the reduced basis, and an integer label of the
    traced-out occupations.
    """
    basis = _basis_array(modes, cutoff)
    traced = [m for m in range(modes) if m not in keep]
    reduced = _index_map(len(keep), cutoff)
    kept_index = np.array([reduced.index_of(row[list(keep)]) for row in basis], dtype=np.int64)
    if traced:
        traced_key = np.ravel_multi_index(tuple(basis[:, traced].T), (cutoff,) * len(traced))
    else:
        traced_key = np.zeros(len(basis), dtype=np.int64)
    groups = []
    for key in np.unique(traced_key):
        rows = np.flatnonzero(traced_key == key)
        groups.append((rows, kept_index[rows]))
    return reduced, groups


def partial_trace(rho: DensityMatrix, keep_modes: Sequence[int]) -> DensityMatrix:
    """Reduced density matrix on ``keep_modes`` (in the given order)."""
    keep = tuple(int(m) for m in keep_modes)
    if not keep:
        raise UsageError("keep_modes must not be empty")
    if len(set(keep)) != len(keep) or any(not 0 <= m < rho.modes for m in keep):
        raise UsageError(f"invalid keep_modes {keep} for {rho.modes} modes")
    reduced_map, groups = _trace_plan(rho.modes, rho.cutoff, keep)
    out = np.zeros((reduced_map.dim, reduced_map.dim), dtype=np.complex128)
    entries = rho.entries
    for rows, kept in groups:
        out[np.ix_(kept, kept)] += entries[np.ix_(rows, rows)]
    return DensityMatrix(reduced_map, out)
