"""Continuous-variable Born machine training.

The model distribution is the homodyne distribution of ``U(w)|psi_0>``. The loss
is the unbiased MMD estimate between model and target samples under a Gaussian
kernel, and each weight's gradient is estimated from samples of the two
parameter-shifted circuits.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

from ._gauss_transform import gauss_sum_1d
from .errors import SimulationError, UsageError
from .gates import Circuit, apply_circuit, prepare_prefix, shifted_circuits
from .homodyne.sampler import SampleMatrix, sample_homodyne

# pair counts above which 1-D kernel sums switch to the fast Gauss transform
FGT_MIN_PAIRS = 4_000_000
_EXACT_BLOCK = 1 << 22

TASK_MODEL = 0
TASK_TARGET = 1


@dataclass(frozen=True)
class KernelParams:
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise UsageError(f"kernel sigma must be positive, got {self.sigma}")


def gaussian_kernel(x, y, params: KernelParams = KernelParams()) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise UsageError(f"dimension mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    return float(np.exp(-np.dot(diff, diff) / (2 * params.sigma**2)))


def _as_matrix(samples) -> np.ndarray:
    values = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return values


def kernel_sum(x, y, sigma: float = 1.0, method: str = "auto") -> float:
    """``sum_{i,j} k(x_i, y_j)`` over all pairs.

    ``method`` is ``"exact"`` (blocked pairwise evaluation), ``"fgt"`` (1-D fast
    Gauss transform) or ``"auto"`` (FGT for large 1-D inputs).
    """
    x, y = _as_matrix(x), _as_matrix(y)
    if x.shape[1] != y.shape[1]:
        raise UsageError(f"mode count mismatch: {x.shape[1]} vs {y.shape[1]}")
    if method == "auto":
        method = "fgt" if x.shape[1] == 1 and len(x) * len(y) >= FGT_MIN_PAIRS else "exact"
    if method == "fgt":
        if x.shape[1] != 1:
            raise UsageError("the fast Gauss transform is only available for 1-D samples")
        return gauss_sum_1d(x[:, 0], y[:, 0], sigma)
    if method != "exact":
        raise UsageError(f"unknown kernel-sum method {method!r}")
    block = max(1, _EXACT_BLOCK // max(1, len(y)))
    scale = -0.5 / sigma**2
    total = 0.0
    for start in range(0, len(x), block):
        d2 = cdist(x[start : start + block], y, "sqeuclidean")
        total += float(np.exp(scale * d2).sum())
    return total


def _check_pair(x: np.ndarray, y: np.ndarray):
    if x.shape[1] != y.shape[1]:
        raise UsageError(f"mode count mismatch: {x.shape[1]} vs {y.shape[1]}")


def mmd_estimate(X, Y, params: KernelParams = KernelParams(), method: str = "auto") -> float:
    """Unbiased MMD estimate (diagonal pairs excluded from the within-set sums)."""
    x, y = _as_matrix(X), _as_matrix(Y)
    _check_pair(x, y)
    m, n = len(x), len(y)
    if m < 2 or n < 2:
        raise UsageError(f"the unbiased estimator needs at least 2 rows per set, got {m} and {n}")
    s = params.sigma
    # k(x, x) = 1, so the diagonal contributes exactly m (resp. n)
    xx = (kernel_sum(x, x, s, method) - m) / (m * (m - 1))
    yy = (kernel_sum(y, y, s, method) - n) / (n * (n - 1))
    xy = kernel_sum(x, y, s, method) / (m * n)
    return xx + yy - 2.0 * xy


def grad_estimate(
    A, B, X, Y, multiplier: float, params: KernelParams = KernelParams(), method: str = "auto"
) -> float:
    """Parameter-shift estimate of ``d loss / d w`` from shifted-circuit samples.

    ``A``/``B`` come from the ``+s``/``-s`` shifted circuits, ``X`` from the
    current circuit and ``Y`` from the target.
    """
    a, b, x, y = (_as_matrix(v) for v in (A, B, X, Y))
    for other in (b, x, y):
        _check_pair(a, other)
    if min(len(a), len(b), len(x), len(y)) == 0:
        raise UsageError("gradient estimation needs non-empty sample sets")
    s = params.sigma
    r, q, m, n = len(a), len(b), len(x), len(y)
    value = (
        kernel_sum(a, x, s, method) / (r * m)
        - kernel_sum(b, x, s, method) / (q * m)
        - kernel_sum(a, y, s, method) / (r * n)
        + kernel_sum(b, y, s, method) / (q * n)
    )
    return multiplier * value


@dataclass(frozen=True)
class TrainConfig:
    shots: int = 1000
    grad_shots: Optional[int] = None
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    iterations: int = 100
    seed: int = 12345
    s_D: float = 1.0
    s_S: float = 1.0
    sigma: float = 1.0
    target_mode: str = "redraw"
    exact_erf: bool = False

    def __post_init__(self):
        if self.shots < 2:
            raise UsageError(f"shots must be >= 2, got {self.shots}")
        if self.grad_shots is not None and self.grad_shots < 1:
            raise UsageError(f"grad_shots must be >= 1, got {self.grad_shots}")
        if self.iterations < 0:
            raise UsageError(f"iterations must be >= 0, got {self.iterations}")
        if not self.learning_rate > 0:
            raise UsageError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise UsageError(f"{name} must lie in (0, 1), got {value}")
        if not self.epsilon > 0:
            raise UsageError(f"epsilon must be positive, got {self.epsilon}")
        if not (self.s_D > 0 and self.s_S > 0):
            raise UsageError("parameter shifts s_D and s_S must be positive")
        if self.target_mode not in ("redraw", "fixed"):
            raise UsageError(f"target_mode must be 'redraw' or 'fixed', got {self.target_mode!r}")
        KernelParams(self.sigma)

    @property
    def kernel(self) -> KernelParams:
        return KernelParams(self.sigma)

    @property
    def gradient_shots(self) -> int:
        return self.shots if self.grad_shots is None else self.grad_shots


@dataclass(frozen=True, eq=False)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(state: AdamState, weights, grad, config: TrainConfig):
    """One bias-corrected Adam update; returns ``(new_state, new_weights)``."""
    w = np.asarray(weights, dtype=float)
    g = np.asarray(grad, dtype=float)
    if not (w.shape == g.shape == state.first_moment.shape):
        raise UsageError(f"length mismatch: weights {w.shape}, grad {g.shape}")
    t = state.step_count + 1
    m = config.beta1 * state.first_moment + (1 - config.beta1) * g
    v = config.beta2 * state.second_moment + (1 - config.beta2) * g * g
    m_hat = m / (1 - config.beta1**t)
    v_hat = v / (1 - config.beta2**t)
    new_w = w - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return AdamState(m, v, t), new_w


@dataclass(frozen=True, eq=False)
class TrainRecord:
    iteration: int
    loss: float
    weights: np.ndarray
    wall_time: float
    gradient: Optional[np.ndarray] = None
    leakage: float = 0.0


STREAM_TRAIN = 0
STREAM_BASELINE = 1


def task_seed(seed: int, iteration: int, task: int, stream: int = STREAM_TRAIN) -> int:
    """Independent sampler seed for one (iteration, task) pair."""
    entropy = [seed, stream, iteration, task]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class CircuitTarget:
    """Target distribution given by a circuit at fixed weights."""

    circuit: Circuit
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def state(self):
        return apply_circuit(self.circuit, self.weights)


class _TargetSource:
    def __init__(self, target, config: TrainConfig, exact_erf: bool):
        self.config = config
        self.exact_erf = exact_erf
        self._fixed = None
        if isinstance(target, CircuitTarget):
            self._state = target.state()
            self._hbar = target.circuit.hbar
            self._pool = None
        elif isinstance(target, SampleMatrix):
            if target.shots < 2:
                raise UsageError("target sample pool needs at least 2 rows")
            self._state = None
            self._pool = target
        else:
            raise UsageError(f"unsupported target type {type(target).__name__}")

    @property
    def modes(self) -> int:
        return self._state.modes if self._state is not None else self._pool.modes

    def draw(self, iteration: int) -> SampleMatrix:
        if self.config.target_mode == "fixed":
            if self._fixed is None:
                self._fixed = self._draw(0)
            return self._fixed
        return self._draw(iteration)

    def _draw(self, iteration: int) -> SampleMatrix:
        seed = task_seed(self.config.seed, iteration, TASK_TARGET)
        if self._state is not None:
            return sample_homodyne(self._state, self.config.shots, self._hbar, seed, exact_erf=self.exact_erf)
        if self._pool.shots <= self.config.shots:
            return self._pool
        rows = np.random.default_rng(seed).choice(self._pool.shots, self.config.shots, replace=False)
        return SampleMatrix(self._pool.values[np.sort(rows)])


def train(
    model: Circuit,
    initial_weights: Sequence[float],
    target: Union[SampleMatrix, CircuitTarget],
    config: TrainConfig,
    callback: Optional[Callable[[TrainRecord], None]] = None,
) -> list[TrainRecord]:
    """Run ``config.iterations`` Adam steps; returns ``iterations + 1`` records.

    Record ``t`` holds the loss sampled at the weights before update ``t`` (the
    last record has the final weights) and the gradient estimate used for it.
    """
    weights = np.asarray(initial_weights, dtype=float).copy()
    if len(weights) != model.num_weights:
        raise UsageError(f"model has {model.num_weights} weights, got {len(weights)} initial values")
    source = _TargetSource(target, config, config.exact_erf)
    if source.modes != model.modes:
        raise UsageError(f"target has {source.modes} modes, model has {model.modes}")

    kernel = config.kernel
    prefix = prepare_prefix(model)
    adam = AdamState.zeros(len(weights))
    records: list[TrainRecord] = []
    start = time.monotonic()

    def sample(w, shots, iteration, task):
        state = apply_circuit(model, w, prefix)
        seed = task_seed(config.seed, iteration, task)
        return sample_homodyne(state, shots, model.hbar, seed, exact_erf=config.exact_erf), state.leakage

    for t in range(config.iterations + 1):
        try:
            x, leakage = sample(weights, config.shots, t, TASK_MODEL)
            y = source.draw(t)
            loss = mmd_estimate(x, y, kernel)
            grad = None
            if t < config.iterations:
                grad = np.zeros(len(weights))
                for k in range(len(weights)):
                    plus, minus, mult = shifted_circuits(model, weights, k, config.s_D, config.s_S)
                    a, _ = sample(plus, config.gradient_shots, t, 2 + 2 * k)
                    b, _ = sample(minus, config.gradient_shots, t, 3 + 2 * k)
                    grad[k] = grad_estimate(a, b, x, y, mult, kernel)
        except SimulationError as exc:
            raise type(exc)(f"iteration {t}: {exc}") from exc
        record = TrainRecord(t, loss, weights.copy(), time.monotonic() - start, grad, leakage)
        records.append(record)
        if callback is not None:
            callback(record)
        if grad is not None:
            adam, weights = adam_step(adam, weights, grad, config)
    return records


class BaselineBand(NamedTuple):
    mean: float
    std: float
    values: np.ndarray


def baseline_band(
    target_circuit: Circuit,
    target_weights: Sequence[float],
    config: TrainConfig,
    repeats: int = 100,
) -> BaselineBand:
    """MMD estimates between independent target sample sets (the convergence reference)."""
    if repeats < 1:
        raise UsageError(f"repeats must be >= 1, got {repeats}")
    state = apply_circuit(target_circuit, target_weights)
    values = np.empty(repeats)
    for r in range(repeats):
        y1, y2 = (
            sample_homodyne(
                state,
                config.shots,
                target_circuit.hbar,
                task_seed(config.seed, r, side, STREAM_BASELINE),
                exact_erf=config.exact_erf,
            )
            for side in (0, 1)
        )
        values[r] = mmd_estimate(y1, y2, config.kernel)
    std = float(values.std(ddof=1)) if repeats > 1 else 0.0
    return BaselineBand(float(values.mean()), std, values)


def loss_baseline(
    target_circuit: Circuit, target_weights: Sequence[float], config: TrainConfig, repeats: int = 100
) -> float:
    return baseline_band(target_circuit, target_weights, config, repeats).mean


def first_in_band(records: Sequence[TrainRecord], band: BaselineBand, width: float = 3.0) -> Optional[int]:
    """First iteration whose loss lies within ``width`` band standard deviations."""
    for rec in records:
        if abs(rec.loss - band.mean) <= width * band.std:
            return rec.iteration
    return None


def records_to_csv(records: Sequence[TrainRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    width = len(records[0].weights) if records else 0
    writer.writerow(["iteration", "loss"] + [f"w{k}" for k in range(width)] + ["wall_time_s"])
    for rec in records:
        writer.writerow(
            [rec.iteration, repr(float(rec.loss))]
            + [repr(float(w)) for w in rec.weights]
            + [f"{rec.wall_time:.6f}"]
        )
    return buf.getvalue()
