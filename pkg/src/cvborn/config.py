"""Run configuration documents (YAML) for the command-line tool.

A document is a single YAML mapping::

    command: train            # sample | train | benchmark
    modes: 3                  # required for sample/train
    cutoff: 10
    hbar: 2.0                 # default 2.0
    seed: 12345               # default 12345
    pad: 10                   # local padding used when building gate matrices
    max_leakage: 0.001        # tolerated truncation leakage per circuit run
    output: run.csv           # primary CSV; the JSON summary goes next to it
    initial: [0, 0, 0]        # optional Fock occupation of the input state
    circuit:
      - {gate: Displacement, modes: [0], r: 1.0}
      - {gate: Beamsplitter, modes: [0, 1], weight: 0}
    sample: {...}             # see SampleBlock
    train: {...}              # see TrainBlock
    benchmark: {...}          # see BenchmarkBlock

Gate parameters are given by name and default to 0. ``weight: k`` binds weight
``k`` to the gate's trainable parameter (``phi`` for Phaseshift, ``theta`` for
Beamsplitter, ``r`` for Displacement and Squeezing). Real numbers may also be
written as multiples of pi, e.g. ``pi/4`` or ``-3*pi/2``. Unknown keys are
errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import MISSING, dataclass, fields
from typing import Any, Optional

import yaml

from .cvbm import TrainConfig
from .errors import ConfigError, UsageError
from .fock import CutoffSpec, PureState
from .gates import DEFAULT_MAX_LEAKAGE, DEFAULT_PAD, PARAM_NAMES, SHIFTABLE_SLOT, Circuit, GateSpec, WeightBinding

COMMANDS = ("sample", "train", "benchmark")
_PI_RE = re.compile(r"^\s*(-)?\s*(?:(\d+(?:\.\d*)?)\s*\*\s*)?pi\s*(?:/\s*(\d+(?:\.\d*)?))?\s*$")


@dataclass(frozen=True)
class GateEntry:
    kind: str
    modes: tuple[int, ...]
    params: tuple[tuple[str, float], ...] = ()
    weight: Optional[int] = None

    def spec(self) -> GateSpec:
        values = dict(self.params)
        return GateSpec(self.kind, self.modes, tuple(values.get(n, 0.0) for n in PARAM_NAMES[self.kind]))


@dataclass(frozen=True)
class SampleBlock:
    shots: int
    exact_erf: bool = False
    angles: Optional[tuple[float, ...]] = None
    representation: str = "pure"


@dataclass(frozen=True)
class TrainBlock:
    shots: int
    iterations: int
    learning_rate: float
    grad_shots: Optional[int] = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    s_D: float = 1.0
    s_S: float = 1.0
    sigma: float = 1.0
    target_mode: str = "redraw"
    exact_erf: bool = False
    initial_weights: Optional[tuple[float, ...]] = None
    target_weights: Optional[tuple[float, ...]] = None
    target_samples: Optional[str] = None
    baseline_repeats: int = 100
    band_width: float = 3.0


@dataclass(frozen=True)
class BenchmarkBlock:
    min_modes: int
    max_modes: int
    shots: int = 100
    iterations: int = 100
    warmup: int = 10
    large_threshold: int = 6
    large_iterations: int = 1
    large_warmup: int = 1
    representation: str = "density"


@dataclass(frozen=True)
class RunConfig:
    command: str
    cutoff: int
    output: str
    modes: Optional[int] = None
    hbar: float = 2.0
    seed: int = 12345
    pad: int = DEFAULT_PAD
    max_leakage: float = DEFAULT_MAX_LEAKAGE
    initial: Optional[tuple[int, ...]] = None
    circuit: tuple[GateEntry, ...] = ()
    sample: Optional[SampleBlock] = None
    train: Optional[TrainBlock] = None
    benchmark: Optional[BenchmarkBlock] = None

    def build_circuit(self) -> Circuit:
        spec = CutoffSpec(self.modes, self.cutoff)
        bindings = [
            WeightBinding(g.weight, pos, SHIFTABLE_SLOT.get(g.kind, ""))
            for pos, g in enumerate(self.circuit)
            if g.weight is not None
        ]
        initial = PureState.fock(spec, self.initial) if self.initial is not None else None
        return Circuit(
            spec,
            [g.spec() for g in self.circuit],
            bindings,
            initial=initial,
            hbar=self.hbar,
            pad=self.pad,
            max_leakage=self.max_leakage,
        )

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            shots=t.shots,
            grad_shots=t.grad_shots,
            learning_rate=t.learning_rate,
            beta1=t.beta1,
            beta2=t.beta2,
            epsilon=t.epsilon,
            iterations=t.iterations,
            seed=self.seed,
            s_D=t.s_D,
            s_S=t.s_S,
            sigma=t.sigma,
            target_mode=t.target_mode,
            exact_erf=t.exact_erf,
        )


# -- parsing ---------------------------------------------------------------


class _Doc:
    """Composed YAML tree plus the source line of every node, keyed by path."""

    def __init__(self, text: str):
        try:
            root = yaml.compose(text, Loader=yaml.SafeLoader)
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML: {exc}") from None
        if root is None:
            raise ConfigError("empty configuration document")
        self.lines: dict[tuple, int] = {}
        self.data = self._convert(root, ())

    def _convert(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for key_node, value_node in node.value:
                if not isinstance(key_node, yaml.ScalarNode):
                    raise ConfigError(f"line {key_node.start_mark.line + 1}: mapping keys must be scalars")
                key = key_node.value
                if key in out:
                    raise ConfigError(f"line {key_node.start_mark.line + 1}: duplicate key {_fmt((*path, key))}")
                out[key] = self._convert(value_node, (*path, key))
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._convert(v, (*path, i)) for i, v in enumerate(node.value)]
        return yaml.SafeLoader("").construct_object(node)

    def error(self, path, message) -> ConfigError:
        probe = tuple(path)
        while probe not in self.lines and probe:
            probe = probe[:-1]
        return ConfigError(f"line {self.lines.get(probe, 1)}: {_fmt(path)}: {message}")


def _fmt(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<document>"


class _Reader:
    """Typed access to one mapping with unknown-key detection."""

    def __init__(self, doc: _Doc, path: tuple, value: Any):
        if not isinstance(value, dict):
            raise doc.error(path, f"expected a mapping, got {type(value).__name__}")
        self.doc, self.path, self.value = doc, path, value
        self.used: set[str] = set()

    def get(self, key, kind, default=...):
        self.used.add(key)
        path = (*self.path, key)
        if key not in self.value or self.value[key] is None:
            if default is ...:
                raise self.doc.error(path, "required field is missing")
            return default
        return _coerce(self.doc, path, self.value[key], kind)

    def finish(self):
        unknown = sorted(set(self.value) - self.used)
        if unknown:
            raise self.doc.error((*self.path, unknown[0]), f"unknown key (allowed: {', '.join(sorted(self.used))})")


def _coerce(doc: _Doc, path, value, kind):
    if kind is bool:
        if not isinstance(value, bool):
            raise doc.error(path, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise doc.error(path, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        return _real(doc, path, value)
    if kind is str:
        if not isinstance(value, str):
            raise doc.error(path, f"expected a string, got {value!r}")
        return value
    if isinstance(kind, tuple) and kind[0] == "list":
        if not isinstance(value, list):
            raise doc.error(path, f"expected a list, got {value!r}")
        return tuple(_coerce(doc, (*path, i), v, kind[1]) for i, v in enumerate(value))
    raise AssertionError(kind)


def _real(doc: _Doc, path, value) -> float:
    if isinstance(value, bool):
        raise doc.error(path, f"expected a real number, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        match = _PI_RE.match(value)
        if match is None:
            try:
                out = float(value)
            except ValueError:
                raise doc.error(path, f"expected a real number, got {value!r}") from None
        else:
            sign, factor, divisor = match.groups()
            out = (float(factor) if factor else 1.0) * math.pi / (float(divisor) if divisor else 1.0)
            out = -out if sign else out
    else:
        raise doc.error(path, f"expected a real number, got {value!r}")
    if not math.isfinite(out):
        raise doc.error(path, f"expected a finite number, got {value!r}")
    return out


def _choice(doc, path, value, allowed):
    if value not in allowed:
        raise doc.error(path, f"must be one of {', '.join(allowed)}, got {value!r}")
    return value


def _parse_gate(doc: _Doc, path, value) -> GateEntry:
    r = _Reader(doc, path, value)
    kind = _choice(doc, (*path, "gate"), r.get("gate", str), tuple(PARAM_NAMES))
    modes = r.get("modes", ("list", int))
    params = []
    for name in PARAM_NAMES[kind]:
        v = r.get(name, float, None)
        if v is not None:
            params.append((name, v))
    weight = r.get("weight", int, None)
    r.finish()
    try:
        entry = GateEntry(kind, modes, tuple(params), weight)
        entry.spec()
    except UsageError as exc:
        raise doc.error(path, str(exc)) from None
    return entry


def _parse_block(doc: _Doc, key: str, value, cls, kinds: dict):
    r = _Reader(doc, (key,), value)
    kwargs = {}
    for f in fields(cls):
        required = f.default is MISSING
        got = r.get(f.name, kinds[f.name], ... if required else None)
        if got is not None:
            kwargs[f.name] = got
    r.finish()
    return cls(**kwargs)


_SAMPLE_KINDS = {"shots": int, "exact_erf": bool, "angles": ("list", float), "representation": str}
_TRAIN_KINDS = {
    "shots": int,
    "iterations": int,
    "learning_rate": float,
    "grad_shots": int,
    "beta1": float,
    "beta2": float,
    "epsilon": float,
    "s_D": float,
    "s_S": float,
    "sigma": float,
    "target_mode": str,
    "exact_erf": bool,
    "initial_weights": ("list", float),
    "target_weights": ("list", float),
    "target_samples": str,
    "baseline_repeats": int,
    "band_width": float,
}
_BENCH_KINDS = {
    "min_modes": int,
    "max_modes": int,
    "shots": int,
    "iterations": int,
    "warmup": int,
    "large_threshold": int,
    "large_iterations": int,
    "large_warmup": int,
    "representation": str,
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document.

    Raises :class:`ConfigError` with line and field context on schema or
    consistency violations.
    """
    doc = _Doc(text)
    r = _Reader(doc, (), doc.data)
    command = _choice(doc, ("command",), r.get("command", str), COMMANDS)
    kwargs: dict[str, Any] = {
        "command": command,
        "cutoff": r.get("cutoff", int),
        "output": r.get("output", str),
        "modes": r.get("modes", int, None),
        "hbar": r.get("hbar", float, 2.0),
        "seed": r.get("seed", int, 12345),
        "pad": r.get("pad", int, DEFAULT_PAD),
        "max_leakage": r.get("max_leakage", float, DEFAULT_MAX_LEAKAGE),
        "initial": r.get("initial", ("list", int), None),
    }
    r.used.add("circuit")
    raw_circuit = doc.data.get("circuit")
    if raw_circuit is not None:
        if not isinstance(raw_circuit, list):
            raise doc.error(("circuit",), "expected a list of gates")
        kwargs["circuit"] = tuple(_parse_gate(doc, ("circuit", i), g) for i, g in enumerate(raw_circuit))
    blocks = {"sample": (SampleBlock, _SAMPLE_KINDS), "train": (TrainBlock, _TRAIN_KINDS), "benchmark": (BenchmarkBlock, _BENCH_KINDS)}
    for key, (cls, kinds) in blocks.items():
        r.used.add(key)
        if doc.data.get(key) is not None:
            kwargs[key] = _parse_block(doc, key, doc.data[key], cls, kinds)
    r.finish()
    config = RunConfig(**kwargs)
    _validate(doc, config)
    return config


def _validate(doc: _Doc, c: RunConfig) -> None:
    def check(ok, path, message):
        if not ok:
            raise doc.error(path, message)

    check(c.cutoff >= 1, ("cutoff",), f"must be >= 1, got {c.cutoff}")
    check(c.hbar > 0, ("hbar",), f"must be positive, got {c.hbar}")
    check(c.seed >= 0, ("seed",), f"must be non-negative, got {c.seed}")
    check(c.pad >= 0, ("pad",), f"must be non-negative, got {c.pad}")
    check(0 < c.max_leakage <= 1, ("max_leakage",), f"must lie in (0, 1], got {c.max_leakage}")
    check(c.output.strip() != "", ("output",), "must be a non-empty path")
    block = getattr(c, c.command)
    check(block is not None, (c.command,), f"the {c.command} command needs a '{c.command}' block")

    if c.command in ("sample", "train"):
        check(c.modes is not None, ("modes",), "required field is missing")
        check(c.modes >= 1, ("modes",), f"must be >= 1, got {c.modes}")
        for i, g in enumerate(c.circuit):
            check(all(m < c.modes for m in g.modes), ("circuit", i, "modes"), f"mode index must be < {c.modes}")
            if g.weight is not None:
                check(g.kind in SHIFTABLE_SLOT, ("circuit", i, "weight"), f"{g.kind} has no parameter-shift rule and cannot carry a weight")
        if c.initial is not None:
            check(len(c.initial) == c.modes, ("initial",), f"needs {c.modes} occupations")
            check(all(n >= 0 for n in c.initial) and sum(c.initial) < c.cutoff, ("initial",), f"must satisfy n >= 0 and sum(n) < {c.cutoff}")
        try:
            circuit = c.build_circuit()
        except UsageError as exc:
            raise doc.error(("circuit",), str(exc)) from None

    if c.command == "sample":
        s = c.sample
        check(s.shots >= 1, ("sample", "shots"), f"must be >= 1, got {s.shots}")
        _choice(doc, ("sample", "representation"), s.representation, ("pure", "density"))
        if s.angles is not None:
            check(len(s.angles) == c.modes, ("sample", "angles"), f"needs {c.modes} angles")
        check(circuit.num_weights == 0, ("circuit",), "sampling takes no trainable weights; drop the 'weight' keys")
    elif c.command == "train":
        t = c.train
        w = circuit.num_weights
        check(w >= 1, ("circuit",), "training needs at least one gate with a 'weight' key")
        if t.initial_weights is not None:
            check(len(t.initial_weights) == w, ("train", "initial_weights"), f"needs {w} values")
        check((t.target_weights is None) != (t.target_samples is None), ("train",), "give exactly one of target_weights or target_samples")
        if t.target_weights is not None:
            check(len(t.target_weights) == w, ("train", "target_weights"), f"needs {w} values")
        check(t.iterations >= 1, ("train", "iterations"), f"must be >= 1, got {t.iterations}")
        check(t.baseline_repeats >= 0, ("train", "baseline_repeats"), "must be >= 0")
        check(t.band_width > 0, ("train", "band_width"), "must be positive")
        try:
            c.train_config()
        except UsageError as exc:
            raise doc.error(("train",), str(exc)) from None
    else:
        b = c.benchmark
        check(1 <= b.min_modes <= b.max_modes, ("benchmark", "min_modes"), "need 1 <= min_modes <= max_modes")
        check(b.shots >= 1, ("benchmark", "shots"), "must be >= 1")
        for key in ("iterations", "large_iterations"):
            check(getattr(b, key) >= 1, ("benchmark", key), "must be >= 1")
        for key in ("warmup", "large_warmup"):
            check(getattr(b, key) >= 0, ("benchmark", key), "must be >= 0")
        _choice(doc, ("benchmark", "representation"), b.representation, ("pure", "density"))


# -- serialization ---------------------------------------------------------


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def _block_dict(block) -> dict:
    return {f.name: _plain(getattr(block, f.name)) for f in fields(block) if getattr(block, f.name) is not None}


def config_to_dict(config: RunConfig) -> dict:
    out: dict[str, Any] = {
        "command": config.command,
        "modes": config.modes,
        "cutoff": config.cutoff,
        "hbar": config.hbar,
        "seed": config.seed,
        "pad": config.pad,
        "max_leakage": config.max_leakage,
        "output": config.output,
    }
    if config.modes is None:
        del out["modes"]
    if config.initial is not None:
        out["initial"] = list(config.initial)
    if config.circuit:
        gates = []
        for g in config.circuit:
            entry: dict[str, Any] = {"gate": g.kind, "modes": list(g.modes)}
            entry.update({name: value for name, value in g.params})
            if g.weight is not None:
                entry["weight"] = g.weight
            gates.append(entry)
        out["circuit"] = gates
    for key in ("sample", "train", "benchmark"):
        block = getattr(config, key)
        if block is not None:
            out[key] = _block_dict(block)
    return out


def serialize_config(config: RunConfig) -> str:
    """YAML text that :func:`parse_config` maps back to ``config``."""
    return yaml.safe_dump(config_to_dict(config), sort_keys=False, default_flow_style=None)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
