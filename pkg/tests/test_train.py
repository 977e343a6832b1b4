from __future__ import annotations

import numpy as np
import pytest

from acrestore import MeasurementSet, canonical_kinds, eval_h, wls_restore
from acrestore.train import (
    ScenarioRecord,
    TrainConfig,
    TrainingError,
    accumulate_gradient,
    adam_step,
    default_initial_weights,
    loss,
    train_weights,
)
from conftest import perturbed_state


def make_record(network, rng, noise_std=0.0, index=0, kinds=None):
    kinds = canonical_kinds(network) if kinds is None else kinds
    truth = perturbed_state(network, rng)
    values = eval_h(network, truth, kinds)
    if noise_std:
        values = values + rng.normal(0, noise_std, len(kinds))
    return ScenarioRecord(
        p_load=network.p_load.copy(),
        q_load=network.q_load.copy(),
        x_ac=truth,
        z=MeasurementSet(kinds, values),
        index=index,
    )


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def test_loss_zero_on_exact_match(case5):
    rng = np.random.default_rng(0)
    records = [make_record(case5, rng, index=i) for i in range(3)]
    assert loss(records, [r.x_ac for r in records]) == 0.0


def test_loss_single_bus_deviation(case5):
    rng = np.random.default_rng(1)
    rec = make_record(case5, rng)
    vm = rec.x_ac.vm.copy()
    vm[2] += 0.1
    from acrestore import StateVector

    bumped = StateVector(vm, rec.x_ac.va, rec.x_ac.slack)
    assert loss([rec], [bumped]) == pytest.approx(0.01 / 9.0)


def test_loss_sums_over_records(case5):
    rng = np.random.default_rng(2)
    records = [make_record(case5, rng, index=i) for i in range(2)]
    from acrestore import StateVector

    bumped = []
    for rec in records:
        vm = rec.x_ac.vm.copy()
        vm[0] += 0.05
        bumped.append(StateVector(vm, rec.x_ac.va, rec.x_ac.slack))
    assert loss(records, bumped) == pytest.approx(2 * 0.05**2 / 9.0)


# ---------------------------------------------------------------------------
# gradient accumulation
# ---------------------------------------------------------------------------


def test_gradient_zero_on_consistent_dataset(case5):
    rng = np.random.default_rng(3)
    records = [make_record(case5, rng, index=i) for i in range(3)]
    w = default_initial_weights(records[0].z.kinds)
    grad = accumulate_gradient(case5, records, w)
    assert np.max(np.abs(grad)) < 1e-9


def test_gradient_additivity(case5):
    rng = np.random.default_rng(4)
    rec = make_record(case5, rng, noise_std=1e-3)
    w = default_initial_weights(rec.z.kinds)
    one = accumulate_gradient(case5, [rec], w)
    two = accumulate_gradient(case5, [rec, rec], w)
    assert two == pytest.approx(2.0 * one, rel=1e-12)


def fd_loss_gradient(network, records, w, rel_step=1e-4):
    """Central differences of the half-squared-error objective through the
    full restoration pipeline; the independent oracle for the gradient."""

    def objective(weights):
        total = 0.0
        for rec in records:
            res = wls_restore(network, rec.z, weights, tol=1e-12, max_iter=100)
            assert res.converged
            diff = res.state.as_vector() - rec.x_ac.as_vector()
            total += 0.5 * float(diff @ diff)
        return total

    grad = np.empty(w.size)
    for i in range(w.size):
        delta = rel_step * w[i]
        hi, lo = w.copy(), w.copy()
        hi[i] += delta
        lo[i] -= delta
        grad[i] = (objective(hi) - objective(lo)) / (2 * delta)
    return grad


def test_gradient_matches_finite_differences(two_bus):
    from test_wls import two_bus_oracle_problem

    z, w = two_bus_oracle_problem(two_bus)
    rng = np.random.default_rng(5)
    truth = perturbed_state(two_bus, rng, vm_spread=0.01, va_spread=0.05)
    rec = ScenarioRecord(two_bus.p_load, two_bus.q_load, truth, z)
    analytic = accumulate_gradient(two_bus, [rec], w)
    fd = fd_loss_gradient(two_bus, [rec], w)
    scale = np.abs(fd).max()
    assert np.max(np.abs(analytic - fd)) / scale < 1e-2


def test_too_many_failures_aborts(case5):
    rng = np.random.default_rng(6)
    # underdetermined per-record layout: every restoration fails and the
    # failure fraction trips the abort threshold
    from acrestore import MeasurementKind

    kinds = (MeasurementKind("vm", 0), MeasurementKind("vm", 1))
    records = []
    for i in range(3):
        truth = perturbed_state(case5, rng)
        values = eval_h(case5, truth, kinds)
        records.append(
            ScenarioRecord(case5.p_load, case5.q_load, truth, MeasurementSet(kinds, values), index=i)
        )
    with pytest.raises(TrainingError):
        accumulate_gradient(case5, records, np.full(len(kinds), 1e3))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_first_step_closed_form():
    config = TrainConfig(eta=2.0)
    g = np.array([3.0, -0.5, 1e-12])
    w = np.array([10.0, 10.0, 10.0])
    w1, m1, v1 = adam_step(w, np.zeros(3), np.zeros(3), g, 1, config)
    expected = w - config.eta * g / (np.sqrt(g * g) + config.epsilon)
    assert w1 == pytest.approx(expected, abs=1e-12)
    assert m1 == pytest.approx((1 - config.beta1) * g)
    assert v1 == pytest.approx((1 - config.beta2) * g * g)


def test_adam_momentum_moves_on_zero_gradient():
    config = TrainConfig(eta=1.0)
    m_prev = np.array([0.4])
    v_prev = np.array([0.2])
    w = np.array([5.0])
    w1, m1, v1 = adam_step(w, m_prev, v_prev, np.zeros(1), 2, config)
    assert m1 == pytest.approx(config.beta1 * m_prev)
    assert v1 == pytest.approx(config.beta2 * v_prev)
    assert w1[0] != 5.0


def test_adam_clamps_at_floor():
    config = TrainConfig(eta=100.0, w_floor=1e-8)
    g = np.array([50.0])
    w = np.array([1.0])
    w1, _, _ = adam_step(w, np.zeros(1), np.zeros(1), g, 1, config)
    assert w1[0] == config.w_floor


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def test_zero_iterations_returns_init(case5):
    rng = np.random.default_rng(7)
    records = [make_record(case5, rng, noise_std=1e-3, index=i) for i in range(2)]
    w0 = default_initial_weights(records[0].z.kinds)
    config = TrainConfig(max_iter=0, w_init=w0)
    w, trace = train_weights(case5, records, config)
    assert w == pytest.approx(w0)
    assert trace.loss == []


def test_consistent_dataset_is_a_fixed_point(case5):
    rng = np.random.default_rng(8)
    records = [make_record(case5, rng, index=i) for i in range(3)]
    w0 = default_initial_weights(records[0].z.kinds)
    config = TrainConfig(max_iter=3, w_init=w0)
    w, trace = train_weights(case5, records, config)
    assert w == pytest.approx(w0)
    assert max(trace.loss) < 1e-15


def test_training_reduces_loss_on_noisy_dataset(case5):
    rng = np.random.default_rng(9)
    records = [make_record(case5, rng, noise_std=2e-3, index=i) for i in range(10)]
    config = TrainConfig(max_iter=40, eta=20.0)
    w, trace = train_weights(case5, records, config)
    assert trace.loss[-1] < trace.loss[0]
    assert len(trace.loss) == 40
    assert all(wi >= config.w_floor for wi in w)


def test_sequential_and_threaded_agree(case5):
    rng = np.random.default_rng(10)
    records = [make_record(case5, rng, noise_std=2e-3, index=i) for i in range(6)]
    cfg_seq = TrainConfig(max_iter=5, threads=1)
    cfg_par = TrainConfig(max_iter=5, threads=4)
    w_seq, trace_seq = train_weights(case5, records, cfg_seq)
    w_par, trace_par = train_weights(case5, records, cfg_par)
    assert w_par == pytest.approx(w_seq, abs=0)
    assert trace_par.loss == pytest.approx(trace_seq.loss, abs=1e-12)


def test_determinism_same_seed(case5):
    rng = np.random.default_rng(11)
    records = [make_record(case5, rng, noise_std=2e-3, index=i) for i in range(6)]
    config = TrainConfig(max_iter=4, batch_size=3, rng_seed=42)
    w1, t1 = train_weights(case5, records, config)
    w2, t2 = train_weights(case5, records, config)
    assert np.array_equal(w1, w2)
    assert t1.loss == t2.loss


# ---------------------------------------------------------------------------
# initial weights
# ---------------------------------------------------------------------------


def test_default_initial_weights_layout(case5):
    from acrestore import MeasurementKind

    kinds = (
        MeasurementKind("vm", 0),
        MeasurementKind("vm", 1),
        MeasurementKind("pinj", 0),
        MeasurementKind("pinj", 1),
    )
    assert default_initial_weights(kinds) == pytest.approx([1e4, 1e4, 1e3, 1e3])
    assert default_initial_weights(()).size == 0
    flows = tuple(MeasurementKind("qf", e) for e in range(3))
    assert default_initial_weights(flows) == pytest.approx([1e3] * 3)
