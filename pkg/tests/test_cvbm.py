import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cvborn._gauss_transform import gauss_sum_1d
from cvborn.cvbm import (
    AdamState,
    CircuitTarget,
    KernelParams,
    TrainConfig,
    adam_step,
    baseline_band,
    first_in_band,
    gaussian_kernel,
    grad_estimate,
    kernel_sum,
    loss_baseline,
    mmd_estimate,
    records_to_csv,
    task_seed,
    train,
)
from cvborn.errors import TruncationOverflowError, UsageError
from cvborn.fock import CutoffSpec
from cvborn.gates import Circuit, WeightBinding, beamsplitter, displacement, squeezing
from cvborn.homodyne import SampleMatrix


def population_mmd(mu1, s1, mu2, s2, sigma=1.0):
    """Closed-form MMD^2 of two 1-D normals under a Gaussian kernel."""

    def cross(ma, sa, mb, sb):
        v = sigma**2 + sa**2 + sb**2
        return sigma / math.sqrt(v) * math.exp(-((ma - mb) ** 2) / (2 * v))

    return cross(mu1, s1, mu1, s1) + cross(mu2, s2, mu2, s2) - 2 * cross(mu1, s1, mu2, s2)


def brute_kernel_sum(x, y, sigma):
    total = 0.0
    for a in np.atleast_2d(x.T).T:
        for b in np.atleast_2d(y.T).T:
            total += math.exp(-float(np.sum((a - b) ** 2)) / (2 * sigma**2))
    return total


def test_gaussian_kernel_examples():
    assert gaussian_kernel([0.3, -1.0], [0.3, -1.0]) == 1.0
    assert gaussian_kernel([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.exp(-1), abs=1e-15)
    x, y = [0.2, 1.4], [-0.3, 0.9]
    assert gaussian_kernel(x, y) == gaussian_kernel(y, x)
    assert gaussian_kernel(0.0, 2.0, KernelParams(2.0)) == pytest.approx(math.exp(-0.5))
    with pytest.raises(UsageError):
        gaussian_kernel([0, 1], [0])
    with pytest.raises(UsageError):
        KernelParams(0.0)


def test_mmd_hand_examples():
    x = np.array([[0.0], [1.0]])
    assert abs(mmd_estimate(x, x) - (math.exp(-0.5) - 1)) < 1e-12
    z = np.zeros((2, 1))
    assert mmd_estimate(z, z) == 0.0
    with pytest.raises(UsageError):
        mmd_estimate(np.zeros((1, 1)), z)
    with pytest.raises(UsageError):
        mmd_estimate(np.zeros((3, 2)), np.zeros((3, 1)))


@settings(max_examples=25, deadline=None)
@given(
    hnp.arrays(float, st.tuples(st.integers(2, 12), st.just(2)), elements=st.floats(-5, 5)),
    hnp.arrays(float, st.tuples(st.integers(2, 12), st.just(2)), elements=st.floats(-5, 5)),
    st.integers(0, 1000),
)
def test_mmd_symmetry_and_permutation(x, y, seed):
    rng = np.random.default_rng(seed)
    base = mmd_estimate(x, y)
    assert mmd_estimate(y, x) == pytest.approx(base, abs=1e-12)
    assert mmd_estimate(rng.permutation(x), rng.permutation(y)) == pytest.approx(base, abs=1e-12)


def test_kernel_sum_methods_agree(rng):
    x = rng.normal(size=(300, 1)) * 2
    y = rng.normal(size=(200, 1)) + 1
    ref = brute_kernel_sum(x, y, 0.7)
    assert kernel_sum(x, y, 0.7, "exact") == pytest.approx(ref, rel=1e-12)
    assert kernel_sum(x, y, 0.7, "fgt") == pytest.approx(ref, rel=1e-12)
    x2, y2 = rng.normal(size=(50, 3)), rng.normal(size=(40, 3))
    assert kernel_sum(x2, y2, 1.0) == pytest.approx(brute_kernel_sum(x2, y2, 1.0), rel=1e-12)
    with pytest.raises(UsageError):
        kernel_sum(x2, y2, 1.0, "fgt")
    with pytest.raises(UsageError):
        kernel_sum(x, y, 1.0, "magic")


@pytest.mark.parametrize("sigma", [0.05, 0.5, 1.0, 4.0])
def test_gauss_transform_accuracy(rng, sigma):
    x = np.concatenate([rng.normal(size=3000) * 3, rng.uniform(-20, 20, size=500)])
    y = rng.standard_cauchy(size=2000).clip(-50, 50)
    exact = kernel_sum(x, y, sigma, "exact")
    assert gauss_sum_1d(x, y, sigma) == pytest.approx(exact, rel=1e-12)
    assert gauss_sum_1d(np.array([]), y, sigma) == 0.0


def test_mmd_unbiased_against_population(rng):
    mu1, s1, mu2, s2 = 0.0, 1.0, 0.7, 1.3
    target = population_mmd(mu1, s1, mu2, s2)
    values = np.array(
        [mmd_estimate(rng.normal(mu1, s1, size=(20, 1)), rng.normal(mu2, s2, size=(15, 1))) for _ in range(2000)]
    )
    se = values.std(ddof=1) / math.sqrt(len(values))
    assert abs(values.mean() - target) < 3 * se


def test_grad_estimate_properties(rng):
    a = rng.normal(size=(30, 2))
    x, y = rng.normal(size=(40, 2)), rng.normal(size=(25, 2)) + 0.5
    assert grad_estimate(a, a, x, y, 0.85) == 0.0
    b = rng.normal(size=(35, 2)) - 0.2
    g1 = grad_estimate(a, b, x, y, 1.0)
    assert grad_estimate(a, b, x, y, 2.0) == 2 * g1
    ref = (
        brute_kernel_sum(a, x, 1) / (30 * 40)
        - brute_kernel_sum(b, x, 1) / (35 * 40)
        - brute_kernel_sum(a, y, 1) / (30 * 25)
        + brute_kernel_sum(b, y, 1) / (35 * 25)
    )
    assert g1 == pytest.approx(ref, abs=1e-12)
    with pytest.raises(UsageError):
        grad_estimate(np.zeros((0, 2)), b, x, y, 1.0)


def test_adam_step():
    cfg = TrainConfig(learning_rate=0.01)
    assert (cfg.beta1, cfg.beta2, cfg.epsilon) == (0.9, 0.999, 1e-8)
    state = AdamState.zeros(3)
    w = np.array([0.1, -0.2, 0.3])
    new_state, new_w = adam_step(state, w, np.zeros(3), cfg)
    np.testing.assert_array_equal(new_w, w)
    assert new_state.step_count == 1
    g = np.array([0.5, -3.0, 1e-3])
    _, new_w = adam_step(AdamState.zeros(3), w, g, cfg)
    # first bias-corrected step is lr * g / (|g| + eps)
    np.testing.assert_allclose(new_w - w, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12, atol=1e-15)
    with pytest.raises(UsageError):
        adam_step(AdamState.zeros(2), w, g, cfg)


def test_adam_matches_reference_loop():
    cfg = TrainConfig(learning_rate=0.05, beta1=0.8, beta2=0.99)
    rng = np.random.default_rng(0)
    grads = rng.normal(size=(10, 2))
    state, w = AdamState.zeros(2), np.zeros(2)
    m = v = np.zeros(2)
    ref = np.zeros(2)
    for t, g in enumerate(grads, start=1):
        state, w = adam_step(state, w, g, cfg)
        m = 0.8 * m + 0.2 * g
        v = 0.99 * v + 0.01 * g * g
        ref = ref - 0.05 * (m / (1 - 0.8**t)) / (np.sqrt(v / (1 - 0.99**t)) + 1e-8)
    np.testing.assert_allclose(w, ref, rtol=1e-14)


def test_train_config_validation():
    for kwargs in (
        {"shots": 1},
        {"iterations": -1},
        {"learning_rate": 0.0},
        {"beta1": 1.0},
        {"beta2": 0.0},
        {"s_S": 0.0},
        {"sigma": -1.0},
        {"target_mode": "sometimes"},
        {"grad_shots": 0},
    ):
        with pytest.raises(UsageError):
            TrainConfig(**kwargs)
    assert TrainConfig(shots=10).gradient_shots == 10
    assert TrainConfig(shots=10, grad_shots=4).gradient_shots == 4


def test_task_seeds_are_distinct():
    seeds = {task_seed(12345, it, task) for it in range(20) for task in range(8)}
    assert len(seeds) == 160
    assert task_seed(1, 0, 0, stream=1) != task_seed(1, 0, 0)


def displacement_model(cutoff=8):
    return Circuit(CutoffSpec(1, cutoff), [displacement(0, 0.0)], [WeightBinding(0, 0, "r")])


def test_zero_iterations_single_record():
    model = displacement_model()
    cfg = TrainConfig(shots=50, iterations=0, seed=3)
    records = train(model, [0.2], CircuitTarget(model, np.array([0.5])), cfg)
    assert len(records) == 1
    assert records[0].iteration == 0
    np.testing.assert_array_equal(records[0].weights, [0.2])
    assert records[0].gradient is None


def test_training_is_bit_identical_on_replay():
    model = Circuit(
        CutoffSpec(2, 6),
        [squeezing(0, 0.0), beamsplitter(0, 1, 0.0)],
        [WeightBinding(0, 0, "r"), WeightBinding(1, 1, "theta")],
        max_leakage=1.0,
    )
    target = CircuitTarget(model, np.array([0.4, 0.3]))
    cfg = TrainConfig(shots=60, iterations=4, learning_rate=0.05, seed=11)
    a, b = train(model, [0, 0], target, cfg), train(model, [0, 0], target, cfg)
    for ra, rb in zip(a, b):
        assert ra.loss == rb.loss
        np.testing.assert_array_equal(ra.weights, rb.weights)
    other = train(model, [0, 0], target, TrainConfig(shots=60, iterations=4, learning_rate=0.05, seed=12))
    assert other[1].loss != a[1].loss


def test_training_moves_towards_target():
    model = displacement_model(12)
    cfg = TrainConfig(shots=300, iterations=60, learning_rate=0.05, seed=2)
    records = train(model, [0.0], CircuitTarget(model, np.array([0.8])), cfg)
    assert records[-1].weights[0] == pytest.approx(0.8, abs=0.15)
    assert records[-1].loss < records[0].loss


def test_self_training_stays_in_band():
    # the +1 shift reaches r = 1.5, which needs headroom above cutoff 8
    model = displacement_model(12)
    w = np.array([0.5])
    cfg = TrainConfig(shots=200, iterations=50, learning_rate=0.01, seed=4)
    records = train(model, w, CircuitTarget(model, w), cfg)
    band = baseline_band(model, w, cfg, repeats=100)
    losses = np.array([r.loss for r in records])
    # no systematic drift: the run's mean loss sits inside the band
    assert abs(losses.mean() - band.mean) < 3 * band.std
    assert abs(records[-1].weights[0] - 0.5) < 0.3


def test_baseline_band_centred():
    model = displacement_model()
    cfg = TrainConfig(shots=100, seed=8)
    band = baseline_band(model, [0.3], cfg, repeats=100)
    assert len(band.values) == 100
    assert abs(band.mean) < 3 * band.std / math.sqrt(100)
    assert loss_baseline(model, [0.3], cfg, repeats=100) == band.mean
    with pytest.raises(UsageError):
        baseline_band(model, [0.3], cfg, repeats=0)


def test_sample_pool_targets():
    model = displacement_model()
    pool = SampleMatrix(np.random.default_rng(0).normal(1.0, 1.0, size=(500, 1)))
    for mode in ("redraw", "fixed"):
        cfg = TrainConfig(shots=100, iterations=3, learning_rate=0.05, seed=5, target_mode=mode)
        records = train(model, [0.0], pool, cfg)
        assert len(records) == 4
    with pytest.raises(UsageError):
        train(model, [0.0], SampleMatrix(np.zeros((10, 2))), TrainConfig(shots=5, iterations=1))
    with pytest.raises(UsageError):
        train(model, [0.0, 1.0], pool, TrainConfig(shots=5, iterations=1))


def test_errors_carry_iteration_context():
    # the +s_D shifted circuit overflows the small cutoff
    model = Circuit(CutoffSpec(1, 5), [displacement(0, 0.0)], [WeightBinding(0, 0, "r")])
    cfg = TrainConfig(shots=20, iterations=2, s_D=2.5, seed=1)
    with pytest.raises(TruncationOverflowError, match="iteration 0"):
        train(model, [0.0], CircuitTarget(model, np.array([0.1])), cfg)


def test_first_in_band_and_csv():
    model = displacement_model()
    cfg = TrainConfig(shots=50, iterations=2, seed=1)
    records = train(model, [0.0], CircuitTarget(model, np.array([0.2])), cfg)
    text = records_to_csv(records)
    lines = text.splitlines()
    assert lines[0] == "iteration,loss,w0,wall_time_s"
    assert len(lines) == 4
    assert float(lines[1].split(",")[1]) == records[0].loss
    from cvborn.cvbm import BaselineBand

    assert first_in_band(records, BaselineBand(records[1].loss, 0.0, np.zeros(1))) == 1
    assert first_in_band(records, BaselineBand(10.0, 1e-3, np.zeros(1))) is None
