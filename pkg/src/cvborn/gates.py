"""Photonic gates on the truncated Fock space and parametrized circuits.

Gate conventions (``a`` is the annihilation operator of a mode)::

    Phaseshift(phi)          exp(i phi a^dag a)
    Beamsplitter(theta, phi) exp(theta (e^{i phi} a_j a_k^dag - e^{-i phi} a_j^dag a_k))
    Displacement(r, phi)     exp(alpha a^dag - alpha^* a),   alpha = r e^{i phi}
    Squeezing(r, phi)        exp((z^* a^2 - z a^dag^2) / 2), z = r e^{i phi}
    CubicPhase(gamma)        exp(i gamma x^3 / (3 hbar)),    x = sqrt(hbar/2) (a + a^dag)
    CrossKerr(xi)            exp(i xi n_j n_k)

Non-diagonal gates are exponentiated on a locally padded space and cropped back
to ``cutoff``. Two-mode gates pad each mode by ``pad``; single-mode gates pad by
at least ``SINGLE_MODE_PAD``, which keeps squeezing up to r = 2 accurate to
about 1e-12 for a few milliseconds of extra work per gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import TruncationOverflowError, UnsupportedGradientError, UsageError
from .fock import CutoffSpec, PureState

DEFAULT_PAD = 10
SINGLE_MODE_PAD = 200
DEFAULT_HBAR = 2.0
DEFAULT_MAX_LEAKAGE = 1e-3

PARAM_NAMES = {
    "Phaseshift": ("phi",),
    "Beamsplitter": ("theta", "phi"),
    "Displacement": ("r", "phi"),
    "Squeezing": ("r", "phi"),
    "CubicPhase": ("gamma",),
    "CrossKerr": ("xi",),
}
ARITY = {
    "Phaseshift": 1,
    "Beamsplitter": 2,
    "Displacement": 1,
    "Squeezing": 1,
    "CubicPhase": 1,
    "CrossKerr": 2,
}
GAUSSIAN = frozenset({"Phaseshift", "Beamsplitter", "Displacement", "Squeezing"})
# parameter slot that admits a parameter-shift rule, per Gaussian gate
SHIFTABLE_SLOT = {
    "Phaseshift": "phi",
    "Beamsplitter": "theta",
    "Displacement": "r",
    "Squeezing": "r",
}


@dataclass(frozen=True)
class GateSpec:
    kind: str
    modes: tuple[int, ...]
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in PARAM_NAMES:
            raise UsageError(f"unknown gate kind {self.kind!r}")
        modes = tuple(int(m) for m in self.modes)
        params = tuple(float(p) for p in self.params)
        if len(modes) != ARITY[self.kind]:
            raise UsageError(f"{self.kind} acts on {ARITY[self.kind]} mode(s), got {modes}")
        if len(set(modes)) != len(modes):
            raise UsageError(f"{self.kind} needs distinct modes, got {modes}")
        if any(m < 0 for m in modes):
            raise UsageError(f"negative mode index in {modes}")
        if len(params) != len(PARAM_NAMES[self.kind]):
            raise UsageError(
                f"{self.kind} takes parameters {PARAM_NAMES[self.kind]}, got {params}"
            )
        if not all(np.isfinite(params)):
            raise UsageError(f"non-finite parameter in {self.kind}{params}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "params", params)

    @property
    def is_gaussian(self) -> bool:
        return self.kind in GAUSSIAN

    def param(self, name: str) -> float:
        return self.params[self.slot_index(name)]

    def slot_index(self, name: str) -> int:
        try:
            return PARAM_NAMES[self.kind].index(name)
        except ValueError:
            raise UsageError(f"{self.kind} has no parameter {name!r}") from None

    def with_param(self, name: str, value: float) -> "GateSpec":
        params = list(self.params)
        params[self.slot_index(name)] = value
        return replace(self, params=tuple(params))


def phaseshift(mode: int, phi: float) -> GateSpec:
    return GateSpec("Phaseshift", (mode,), (phi,))


def beamsplitter(j: int, k: int, theta: float, phi: float = 0.0) -> GateSpec:
    return GateSpec("Beamsplitter", (j, k), (theta, phi))


def displacement(mode: int, r: float, phi: float = 0.0) -> GateSpec:
    return GateSpec("Displacement", (mode,), (r, phi))


def squeezing(mode: int, r: float, phi: float = 0.0) -> GateSpec:
    return GateSpec("Squeezing", (mode,), (r, phi))


def cubic_phase(mode: int, gamma: float) -> GateSpec:
    return GateSpec("CubicPhase", (mode,), (gamma,))


def cross_kerr(j: int, k: int, xi: float) -> GateSpec:
    return GateSpec("CrossKerr", (j, k), (xi,))


@dataclass(frozen=True)
class WeightBinding:
    weight_index: int
    gate_position: int
    param_slot: str


@dataclass(frozen=True, eq=False)
class Circuit:
    """Ordered gate list with trainable weights bound to gate parameters.

    ``initial`` is the input state (vacuum when ``None``).
    """

    cutoff_spec: CutoffSpec
    gates: tuple[GateSpec, ...] = ()
    bindings: tuple[WeightBinding, ...] = ()
    initial: Optional[PureState] = None
    hbar: float = DEFAULT_HBAR
    pad: int = DEFAULT_PAD
    max_leakage: float = DEFAULT_MAX_LEAKAGE
    _binding_map: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "bindings", tuple(self.bindings))
        d = self.cutoff_spec.modes
        if not self.hbar > 0:
            raise UsageError(f"hbar must be positive, got {self.hbar}")
        if self.pad < 0:
            raise UsageError(f"pad must be non-negative, got {self.pad}")
        for pos, gate in enumerate(self.gates):
            if any(m >= d for m in gate.modes):
                raise UsageError(f"gate {pos} ({gate.kind}) acts on mode >= {d}")
        if self.initial is not None and self.initial.index_map.spec != self.cutoff_spec:
            raise UsageError("initial state does not match the circuit's cutoff spec")

        indices = sorted(b.weight_index for b in self.bindings)
        if indices != list(range(len(self.bindings))):
            raise UsageError(f"weight indices must be exactly 0..W-1 once each, got {indices}")
        last_non_gaussian = max(
            (pos for pos, g in enumerate(self.gates) if not g.is_gaussian), default=-1
        )
        seen = set()
        for b in self.bindings:
            if not 0 <= b.gate_position < len(self.gates):
                raise UsageError(f"binding {b} points outside the gate list")
            gate = self.gates[b.gate_position]
            if not gate.is_gaussian:
                raise UsageError(
                    f"weight {b.weight_index} is bound to non-Gaussian gate {gate.kind}; "
                    "no parameter-shift rule exists"
                )
            if SHIFTABLE_SLOT[gate.kind] != b.param_slot:
                raise UsageError(
                    f"weight {b.weight_index}: {gate.kind}.{b.param_slot} is not trainable "
                    f"(only {gate.kind}.{SHIFTABLE_SLOT[gate.kind]})"
                )
            if b.gate_position < last_non_gaussian:
                raise UsageError(
                    f"weight {b.weight_index} is bound to gate {b.gate_position}, which "
                    f"precedes non-Gaussian gate {last_non_gaussian}"
                )
            key = (b.gate_position, b.param_slot)
            if key in seen:
                raise UsageError(f"gate parameter {key} bound twice")
            seen.add(key)
        object.__setattr__(self, "_binding_map", {b.weight_index: b for b in self.bindings})

    @property
    def modes(self) -> int:
        return self.cutoff_spec.modes

    @property
    def cutoff(self) -> int:
        return self.cutoff_spec.cutoff

    @property
    def num_weights(self) -> int:
        return len(self.bindings)

    def binding(self, weight_index: int) -> WeightBinding:
        try:
            return self._binding_map[weight_index]
        except KeyError:
            raise UsageError(f"no weight with index {weight_index}") from None

    def bound_gates(self, weights: Sequence[float]) -> list[GateSpec]:
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(weights) != self.num_weights:
            raise UsageError(f"expected {self.num_weights} weights, got {len(weights)}")
        gates = list(self.gates)
        for b in self.bindings:
            gates[b.gate_position] = gates[b.gate_position].with_param(
                b.param_slot, weights[b.weight_index]
            )
        return gates

    @property
    def prefix_length(self) -> int:
        """Number of leading gates that no weight touches."""
        return min((b.gate_position for b in self.bindings), default=len(self.gates))

    def initial_state(self) -> PureState:
        return self.initial if self.initial is not None else PureState.vacuum(self.cutoff_spec)


def ladder_matrices(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated annihilation and creation matrices of size ``cutoff``."""
    if cutoff < 1:
        raise UsageError(f"cutoff must be >= 1, got {cutoff}")
    a = np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(np.complex128)
    return a, a.conj().T


@lru_cache(maxsize=256)
def _hermitian_generator(kind: str, fixed: tuple[float, ...], size: int, hbar: float):
    """Eigendecomposition of ``H`` with ``gate = exp(i * param * H)``."""
    a, ad = ladder_matrices(size)
    if kind == "Displacement":
        (phi,) = fixed
        h = -1j * (np.exp(1j * phi) * ad - np.exp(-1j * phi) * a)
    elif kind == "Squeezing":
        (phi,) = fixed
        h = -0.5j * (np.exp(-1j * phi) * (a @ a) - np.exp(1j * phi) * (ad @ ad))
    elif kind == "CubicPhase":
        x = np.sqrt(hbar / 2) * (a + ad)
        h = (x @ x @ x) / (3 * hbar)
    elif kind == "Beamsplitter":
        (phi,) = fixed
        eye = np.eye(size)
        aj, ak = np.kron(a, eye), np.kron(eye, a)
        h = -1j * (np.exp(1j * phi) * aj @ ak.conj().T - np.exp(-1j * phi) * aj.conj().T @ ak)
    else:  # pragma: no cover - guarded by callers
        raise UsageError(kind)
    h = 0.5 * (h + h.conj().T)
    return np.linalg.eigh(h)


@lru_cache(maxsize=1024)
def _gate_unitary_cached(gate: GateSpec, cutoff: int, pad: int, hbar: float) -> np.ndarray:
    kind = gate.kind
    n = np.arange(cutoff)
    if kind == "Phaseshift":
        u = np.diag(np.exp(1j * gate.params[0] * n))
    elif kind == "CrossKerr":
        u = np.diag(np.exp(1j * gate.params[0] * np.outer(n, n)).reshape(-1))
    else:
        size = cutoff + (max(pad, SINGLE_MODE_PAD) if ARITY[kind] == 1 else pad)
        param, fixed = gate.params[0], gate.params[1:]
        evals, evecs = _hermitian_generator(kind, fixed, size, hbar)
        if ARITY[kind] == 1:
            keep = np.arange(cutoff)
        else:
            keep = (n[:, None] * size + n[None, :]).reshape(-1)
        rows = evecs[keep]
        u = (rows * np.exp(1j * param * evals)) @ rows.conj().T
    u.setflags(write=False)
    return u


def gate_unitary(
    gate: GateSpec, cutoff: int, pad: int = DEFAULT_PAD, hbar: float = DEFAULT_HBAR
) -> np.ndarray:
    """Local matrix of ``gate`` with every mode truncated at ``cutoff``.

    Two-mode gates use the local index ``n_j * cutoff + n_k``. ``pad`` is the
    padding of two-mode gates and a lower bound for single-mode gates.
    """
    if cutoff < 1 or pad < 0:
        raise UsageError(f"invalid cutoff/pad {cutoff}/{pad}")
    return _gate_unitary_cached(gate, int(cutoff), int(pad), float(hbar))


@lru_cache(maxsize=64)
def _truncation_mask(modes: int, cutoff: int) -> np.ndarray:
    grids = np.indices((cutoff,) * modes).sum(axis=0)
    mask = grids < cutoff
    mask.setflags(write=False)
    return mask


def _apply_gate(tensor: np.ndarray, gate: GateSpec, cutoff: int, pad: int, hbar: float):
    d = tensor.ndim
    n = np.arange(cutoff)
    if gate.kind == "Phaseshift":
        (j,) = gate.modes
        shape = [1] * d
        shape[j] = cutoff
        return tensor * np.exp(1j * gate.params[0] * n).reshape(shape)
    if gate.kind == "CrossKerr":
        j, k = gate.modes
        phase = np.exp(1j * gate.params[0] * np.outer(n, n))
        if j > k:
            j, k = k, j
        shape = [1] * d
        shape[j] = shape[k] = cutoff
        return tensor * phase.reshape(shape)
    u = gate_unitary(gate, cutoff, pad, hbar)
    if len(gate.modes) == 1:
        (j,) = gate.modes
        out = np.tensordot(u, tensor, axes=([1], [j]))
        return np.moveaxis(out, 0, j)
    j, k = gate.modes
    u4 = u.reshape(cutoff, cutoff, cutoff, cutoff)
    out = np.tensordot(u4, tensor, axes=([2, 3], [j, k]))
    return np.moveaxis(out, (0, 1), (j, k))


def evolve_dense(
    tensor: np.ndarray, gates: Sequence[GateSpec], cutoff: int, pad: int, hbar: float
) -> np.ndarray:
    """Apply ``gates`` to a dense ``(c,)*d`` tensor, projecting after every gate."""
    mask = _truncation_mask(tensor.ndim, cutoff)
    for gate in gates:
        tensor = _apply_gate(tensor, gate, cutoff, pad, hbar) * mask
    return tensor


def propagate(circuit: Circuit, weights: Sequence[float], state: Optional[PureState] = None) -> PureState:
    """Apply the circuit without renormalizing (linear in the input state)."""
    gates = circuit.bound_gates(weights)
    start = circuit.initial_state() if state is None else state
    tensor = evolve_dense(start.to_dense(), gates, circuit.cutoff, circuit.pad, circuit.hbar)
    return PureState.from_dense(tensor)


class PreparedPrefix(NamedTuple):
    """Dense state after the weight-independent leading gates."""

    tensor: np.ndarray
    length: int


def prepare_prefix(circuit: Circuit) -> PreparedPrefix:
    length = circuit.prefix_length
    tensor = evolve_dense(
        circuit.initial_state().to_dense(),
        circuit.gates[:length],
        circuit.cutoff,
        circuit.pad,
        circuit.hbar,
    )
    return PreparedPrefix(tensor, length)


def apply_circuit(
    circuit: Circuit,
    weights: Sequence[float] = (),
    prefix: Optional[PreparedPrefix] = None,
) -> PureState:
    """Output state ``U(w)|psi_0>``, renormalized, with its truncation leakage.

    Raises :class:`TruncationOverflowError` when more than
    ``circuit.max_leakage`` of the norm is lost.
    """
    gates = circuit.bound_gates(weights)
    initial = circuit.initial_state()
    norm_in = initial.norm_squared
    if prefix is None:
        prefix = prepare_prefix(circuit)
    tensor = evolve_dense(
        prefix.tensor, gates[prefix.length :], circuit.cutoff, circuit.pad, circuit.hbar
    )
    norm_out = float(np.vdot(tensor, tensor).real)
    leakage = max(0.0, 1.0 - norm_out / norm_in)
    if leakage > circuit.max_leakage:
        raise TruncationOverflowError(
            f"truncation leakage {leakage:.3e} exceeds {circuit.max_leakage:.1e}; "
            f"increase the cutoff (currently {circuit.cutoff})"
        )
    state = PureState.from_dense(tensor / np.sqrt(norm_out), leakage=leakage)
    return state


class ShiftedPair(NamedTuple):
    plus: np.ndarray
    minus: np.ndarray
    multiplier: float


def shift_rule(kind: str, s_D: float = 1.0, s_S: float = 1.0) -> tuple[float, float]:
    """``(shift, multiplier)`` of the parameter-shift rule for a Gaussian gate."""
    if kind in ("Phaseshift", "Beamsplitter"):
        return np.pi / 2, 1.0
    if kind == "Displacement":
        return s_D, 1.0 / s_D
    if kind == "Squeezing":
        return s_S, 1.0 / np.sinh(s_S)
    raise UnsupportedGradientError(f"no parameter-shift rule for {kind}")


def shifted_circuits(
    circuit: Circuit,
    weights: Sequence[float],
    weight_index: int,
    s_D: float = 1.0,
    s_S: float = 1.0,
) -> ShiftedPair:
    """Weight vectors for the +/- shifted circuits and the multiplier ``m_G``."""
    binding = circuit.binding(weight_index)
    gate = circuit.gates[binding.gate_position]
    if not gate.is_gaussian or SHIFTABLE_SLOT.get(gate.kind) != binding.param_slot:
        raise UnsupportedGradientError(
            f"weight {weight_index} drives {gate.kind}.{binding.param_slot}"
        )
    shift, mult = shift_rule(gate.kind, s_D, s_S)
    w = np.asarray(weights, dtype=float).copy()
    plus, minus = w.copy(), w.copy()
    plus[weight_index] += shift
    minus[weight_index] -= shift
    return ShiftedPair(plus, minus, mult)
