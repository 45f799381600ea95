"""Mode-by-mode homodyne sampling by inverse transform.

Mode ``i`` is sampled from the single-mode density matrix obtained by
projecting modes ``0..i-1`` onto their sampled positions and tracing out modes
``i+1..d-1``. The position CDF of that matrix is a closed-form expression whose
polynomial part is computed once per shot and mode, and ``F(t) = alpha`` is
solved with Brent's method.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import (
    DegenerateConditionalError,
    PathologicalDistributionError,
    SimulationError,
    UsageError,
)
from ..fock import DEGENERATE_TRACE, DensityMatrix, FockIndexMap, PureState, partial_trace
from ..gates import evolve_dense, phaseshift
from . import _kernels
from .cdf import (
    BRACKET_CAP,
    ROOT_FTOL,
    ROOT_MAXITER,
    ROOT_RTOL,
    ROOT_XTOL,
    a_from_q,
    q_coefficients,
)
from .hermite import wavefunctions

# rows of conditioned amplitudes processed at once in the pure-state path
_PURE_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """Position samples, one row per shot and one column per mode."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise UsageError(f"samples must be a 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise UsageError("samples contain non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def shots(self) -> int:
        return self.values.shape[0]

    @property
    def modes(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.shots

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{j}" for j in range(self.modes)])
        for row in self.values:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SampleMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise UsageError("empty sample CSV")
        header = rows[0]
        if header != [f"x{j}" for j in range(len(header))]:
            raise UsageError(f"unexpected sample CSV header {header}")
        return cls(np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float))

    @classmethod
    def read(cls, path: Union[str, os.PathLike]) -> "SampleMatrix":
        with open(path, newline="") as fh:
            return cls.from_csv(fh.read())


def uniform_stream(seed: int, shots: int, modes: int) -> np.ndarray:
    """Uniforms in ``(0, 1)`` from a Philox counter stream keyed by ``seed``.

    Entry ``[s, i]`` is the ``(s * modes + i)``-th draw, so shot ``s`` can be
    reproduced independently by advancing the counter.
    """
    gen = np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))
    # random() returns multiples of 2^-53 in [0, 1); shift into the open interval
    return gen.random((shots, modes)) + 2.0**-54


def _root_solve(a_rows: np.ndarray, alphas: np.ndarray, exact_erf: bool, mode: int) -> np.ndarray:
    shots = len(alphas)
    roots = np.empty(shots)
    status = np.empty(shots, dtype=np.int64)
    _kernels.solve_quantiles(
        np.ascontiguousarray(a_rows),
        np.ascontiguousarray(alphas),
        exact_erf,
        ROOT_XTOL,
        ROOT_RTOL,
        ROOT_FTOL,
        ROOT_MAXITER,
        BRACKET_CAP,
        roots,
        status,
    )
    bad = np.flatnonzero(status != _kernels.STATUS_OK)
    if len(bad):
        s = int(bad[0])
        if status[s] == _kernels.STATUS_NO_BRACKET:
            raise PathologicalDistributionError(
                f"shot {s}, mode {mode}: no root bracket for alpha={alphas[s]!r} "
                f"within |t| <= {BRACKET_CAP:g}"
            )
        raise SimulationError(f"shot {s}, mode {mode}: Brent iteration did not converge")
    return roots


def _normalize_batch(rho: np.ndarray, mode: int, offset: int = 0) -> np.ndarray:
    traces = np.trace(rho, axis1=1, axis2=2).real
    bad = np.flatnonzero(traces <= DEGENERATE_TRACE)
    if len(bad):
        raise DegenerateConditionalError(
            f"shot {offset + int(bad[0])}, mode {mode}: conditional trace "
            f"{traces[bad[0]]:.3e} vanished"
        )
    return rho / traces[:, None, None]


def _sample_mode(rho_batch: np.ndarray, alphas: np.ndarray, exact_erf: bool, mode: int, offset: int = 0):
    rho_batch = _normalize_batch(rho_batch, mode, offset)
    a_rows = a_from_q(q_coefficients(rho_batch), rho_batch.shape[-1])
    try:
        return _root_solve(a_rows, alphas, exact_erf, mode)
    except SimulationError as exc:
        if offset:
            raise type(exc)(f"{exc} (chunk offset {offset})") from None
        raise


def _sample_pure(tensor: np.ndarray, alphas: np.ndarray, exact_erf: bool) -> np.ndarray:
    cutoff, d = tensor.shape[0], tensor.ndim
    shots = alphas.shape[0]
    out = np.empty((shots, d))

    first = tensor.reshape(cutoff, -1)
    rho0 = first @ first.conj().T
    a0 = a_from_q(q_coefficients(rho0 / np.trace(rho0).real), cutoff)
    out[:, 0] = _root_solve(np.broadcast_to(a0, (shots, len(a0))), alphas[:, 0], exact_erf, 0)
    if d == 1:
        return out

    chunk = max(1, _PURE_CHUNK_ELEMENTS // cutoff ** (d - 1))
    for start in range(0, shots, chunk):
        stop = min(shots, start + chunk)
        phi = wavefunctions(cutoff, out[start:stop, 0]) @ first
        for mode in range(1, d):
            block = phi.reshape(stop - start, cutoff, -1)
            rho = np.einsum("snr,smr->snm", block, block.conj())
            out[start:stop, mode] = _sample_mode(rho, alphas[start:stop, mode], exact_erf, mode, start)
            if mode < d - 1:
                psi = wavefunctions(cutoff, out[start:stop, mode])
                phi = np.einsum("sn,snr->sr", psi, block)
    return out


@lru_cache(maxsize=64)
def _level_tables(level: int, cutoff: int):
    """Split each basis state of ``level`` modes into (prefix index, last occupation)."""
    basis = FockIndexMap.of(level, cutoff).basis
    prefix_map = FockIndexMap.of(level - 1, cutoff)
    prefix = np.array([prefix_map.index_of(row[:-1]) for row in basis], dtype=np.int64)
    last = np.ascontiguousarray(basis[:, -1])
    return prefix, last


def _sample_density(rho: DensityMatrix, alphas: np.ndarray, exact_erf: bool) -> np.ndarray:
    d, cutoff = rho.modes, rho.cutoff
    shots = alphas.shape[0]
    out = np.empty((shots, d))
    reduced = [partial_trace(rho, range(i + 1)).entries for i in range(d)]

    a0 = a_from_q(q_coefficients(reduced[0] / np.trace(reduced[0]).real), cutoff)
    out[:, 0] = _root_solve(np.broadcast_to(a0, (shots, len(a0))), alphas[:, 0], exact_erf, 0)
    # weights[s, p]: product of wavefunctions over sampled modes for prefix p
    weights = wavefunctions(cutoff, out[:, 0])
    for mode in range(1, d):
        prefix, last = _level_tables(mode + 1, cutoff)
        cond = np.empty((shots, cutoff, cutoff), dtype=np.complex128)
        _kernels.contract_level(
            np.ascontiguousarray(reduced[mode]), prefix, last, np.ascontiguousarray(weights), cutoff, cond
        )
        out[:, mode] = _sample_mode(cond, alphas[:, mode], exact_erf, mode)
        if mode < d - 1:
            psi = wavefunctions(cutoff, out[:, mode])
            weights = weights[:, prefix] * psi[:, last]
    return out


def _rotate(state, angles: Sequence[float]):
    """Pre-rotate by ``Phaseshift(-phi_j)`` so x-sampling measures ``x_phi``."""
    if len(angles) != state.modes:
        raise UsageError(f"expected {state.modes} angles, got {len(angles)}")
    gates = [phaseshift(j, -float(phi)) for j, phi in enumerate(angles) if phi != 0.0]
    if not gates:
        return state
    cutoff = state.cutoff
    if isinstance(state, PureState):
        # diagonal gates keep the truncated space; pad is irrelevant
        return PureState.from_dense(evolve_dense(state.to_dense(), gates, cutoff, 0, 1.0))
    n = state.index_map.basis
    phases = np.exp(-1j * (n * np.asarray(angles, dtype=float)).sum(axis=1))
    entries = phases[:, None] * state.entries * phases.conj()[None, :]
    return DensityMatrix(state.index_map, entries)


def sample_homodyne(
    state: Union[PureState, DensityMatrix],
    shots: int,
    hbar: float = 2.0,
    seed: int = 0,
    angles: Optional[Sequence[float]] = None,
    exact_erf: bool = False,
) -> SampleMatrix:
    """Draw ``shots`` joint position samples (physical units) from ``state``.

    Pure states are conditioned amplitude-wise; density matrices use the
    reduced-matrix contraction. Both consume the same uniform stream, so a
    pure state and its outer product give the same samples for a given seed.
    """
    if int(shots) != shots or shots < 1:
        raise UsageError(f"shots must be a positive integer, got {shots!r}")
    if not hbar > 0:
        raise UsageError(f"hbar must be positive, got {hbar}")
    if angles is not None:
        state = _rotate(state, angles)
    alphas = uniform_stream(seed, int(shots), state.modes)
    if isinstance(state, PureState):
        natural = _sample_pure(state.normalized().to_dense(), alphas, exact_erf)
    elif isinstance(state, DensityMatrix):
        natural = _sample_density(state, alphas, exact_erf)
    else:
        raise UsageError(f"cannot sample from {type(state).__name__}")
    return SampleMatrix(natural * np.sqrt(hbar))


def conditional_density(
    rho: DensityMatrix, prior_samples: Sequence[float], mode: int, hbar: float = 2.0
) -> DensityMatrix:
    """Normalized single-mode matrix of ``mode`` given samples of modes ``0..mode-1``.

    ``prior_samples`` are physical positions; ``mode`` is zero-based.
    """
    prior = np.asarray(prior_samples, dtype=float).reshape(-1)
    if not 0 <= mode < rho.modes:
        raise UsageError(f"mode {mode} out of range for {rho.modes} modes")
    if len(prior) != mode:
        raise UsageError(f"mode {mode} needs {mode} prior samples, got {len(prior)}")
    cutoff = rho.cutoff
    reduced = partial_trace(rho, range(mode + 1))
    single = FockIndexMap.of(1, cutoff)
    if mode == 0:
        out = reduced.entries
    else:
        natural = prior / np.sqrt(hbar)
        weights = np.ones((1, 1))
        psi = wavefunctions(cutoff, natural)
        for j in range(mode):
            if j == 0:
                weights = psi[None, 0, :]
            else:
                prefix, last = _level_tables(j + 1, cutoff)
                weights = weights[:, prefix] * psi[j][last][None, :]
        prefix, last = _level_tables(mode + 1, cutoff)
        cond = np.empty((1, cutoff, cutoff), dtype=np.complex128)
        _kernels.contract_level(
            np.ascontiguousarray(reduced.entries), prefix, last, np.ascontiguousarray(weights), cutoff, cond
        )
        out = cond[0]
    trace = np.trace(out).real
    if trace <= DEGENERATE_TRACE:
        raise DegenerateConditionalError(
            f"mode {mode}: conditional trace {trace:.3e} vanished at samples {prior.tolist()}"
        )
    return DensityMatrix(single, out / trace)
