"""Budgeted worker epochs: step counting, outputs, and divergence."""

import numpy as np
import pytest

from anytime_sgd import rng
from anytime_sgd.data import build_assignment, generate_synthetic, worker_shard
from anytime_sgd.problem import StepSchedule
from anytime_sgd.worker import (
    LAST_ITERATE,
    RUNNING_AVERAGE,
    WorkerBudget,
    continue_idle_updates,
    run_worker_epoch,
)


def _shard(m=60, d=3, noise=0.05, seed=4):
    ds = generate_synthetic(m, d, noise, seed=seed)
    return worker_shard(ds, build_assignment(1, 0), 0), ds


def test_constant_cost_step_count_is_exact():
    shard, _ = _shard()
    sched = StepSchedule.constant(0.001)
    for q in (1, 7, 200, 999):
        budget = WorkerBudget.by_time(q * 0.001)
        rep = run_worker_epoch(shard, np.zeros(3), sched, budget, 0.001, rng.stream(0, rng.SAMPLE, 0, 1))
        assert rep.n_steps == q
        assert rep.finish_time == pytest.approx(q * 0.001, rel=1e-12)


def test_step_count_monotone_in_time_budget():
    shard, _ = _shard()
    sched = StepSchedule.constant(0.001)
    gen = np.random.default_rng(6)
    for trial in range(10):
        scale = float(gen.uniform(0.5, 2.0))
        prev = -1
        for t_budget in (0.01, 0.05, 0.2, 0.8):
            # fresh generator per run so every budget sees the same cost draws
            gen2 = rng.stream(50 + trial, rng.COMPUTE, 0, 1)

            def cost_fresh(k, s=scale, g=gen2):
                return s * 0.001 * (1.0 + g.uniform(0, 1, size=k))

            rep = run_worker_epoch(
                shard, np.zeros(3), sched, WorkerBudget.by_time(t_budget), cost_fresh,
                rng.stream(0, rng.SAMPLE, 0, 1),
            )
            assert rep.n_steps >= prev
            assert rep.finish_time <= t_budget
            prev = rep.n_steps


def test_iteration_budget_runs_exactly_that_many():
    shard, _ = _shard()
    sched = StepSchedule.constant(0.001)
    rep = run_worker_epoch(
        shard, np.zeros(3), sched, WorkerBudget.by_iterations(123), 0.002,
        rng.stream(1, rng.SAMPLE, 0, 1),
    )
    assert rep.n_steps == 123
    assert rep.finish_time == pytest.approx(123 * 0.002, rel=1e-12)


def test_both_spent_budget_takes_the_larger_count():
    shard, _ = _shard()
    sched = StepSchedule.constant(0.001)
    # time admits 100 steps, the cap asks for 30: time wins
    rep = run_worker_epoch(
        shard, np.zeros(3), sched, WorkerBudget.until_both_spent(0.1, 30), 0.001,
        rng.stream(2, rng.SAMPLE, 0, 1),
    )
    assert rep.n_steps == 100
    # cap 300 exceeds what time admits: cap wins and time extends
    rep = run_worker_epoch(
        shard, np.zeros(3), sched, WorkerBudget.until_both_spent(0.1, 300), 0.001,
        rng.stream(2, rng.SAMPLE, 0, 1),
    )
    assert rep.n_steps == 300
    assert rep.finish_time == pytest.approx(0.3, rel=1e-12)


def test_running_average_equals_explicit_mean():
    shard, _ = _shard()
    sched = StepSchedule.constant(0.004)
    q = 40
    rep = run_worker_epoch(
        shard, np.ones(3), sched, WorkerBudget.by_iterations(q), 1.0,
        rng.stream(3, rng.SAMPLE, 0, 1), output=RUNNING_AVERAGE,
    )
    # replay the same draws by hand and average x0 through the last iterate
    idx = rng.stream(3, rng.SAMPLE, 0, 1).integers(0, len(shard), size=q)
    x = np.ones(3)
    traj = [x.copy()]
    for k in range(q):
        b = shard.features[idx[k]]
        r = b @ x - shard.labels[idx[k]]
        x = x - 2.0 * 0.004 * r * b
        traj.append(x.copy())
    assert np.allclose(rep.iterate, np.mean(traj, axis=0), atol=1e-12)

    last = run_worker_epoch(
        shard, np.ones(3), sched, WorkerBudget.by_iterations(q), 1.0,
        rng.stream(3, rng.SAMPLE, 0, 1), output=LAST_ITERATE,
    )
    assert np.allclose(last.iterate, traj[-1], atol=1e-12)


def test_fifty_steps_contract_toward_the_solution():
    shard, ds = _shard(m=200, d=3, noise=0.0, seed=11)
    sched = StepSchedule.constant(0.02)
    x0 = ds.x_star + 2.0
    rep = run_worker_epoch(
        shard, x0, sched, WorkerBudget.by_iterations(50), 1.0,
        rng.stream(4, rng.SAMPLE, 0, 1),
    )
    assert rep.status == "ok"
    before = np.linalg.norm(x0 - ds.x_star)
    after = np.linalg.norm(rep.iterate - ds.x_star)
    assert after < 0.5 * before


def test_divergent_rate_is_reported_not_raised():
    shard, _ = _shard(m=50, d=3, noise=0.0, seed=12)
    sched = StepSchedule.constant(50.0)
    with np.errstate(over="ignore", invalid="ignore"):
        rep = run_worker_epoch(
            shard, np.ones(3), sched, WorkerBudget.by_iterations(2000), 1.0,
            rng.stream(5, rng.SAMPLE, 0, 1),
        )
    assert rep.status == "diverged"
    assert rep.n_steps < 2000


def test_schedule_offset_continues_the_rate_sequence():
    shard, _ = _shard()
    from anytime_sgd.problem import ProblemConstants

    const = ProblemConstants(smoothness=5.0, radius=1.0, grad_bound=10.0, noise_bound=8.0)
    sched = StepSchedule.decreasing(const)
    first = run_worker_epoch(
        shard, np.zeros(3), sched, WorkerBudget.by_iterations(30), 1.0,
        rng.stream(6, rng.SAMPLE, 0, 1),
    )
    resumed = continue_idle_updates(
        first, shard, sched, idle_time=20.0, step_cost=1.0,
        sample_rng=rng.stream(6, rng.SAMPLE, 0, 2),
    )
    # one long run with the concatenated sample squence must coincide
    idx_a = rng.stream(6, rng.SAMPLE, 0, 1).integers(0, len(shard), size=30)
    idx_b = rng.stream(6, rng.SAMPLE, 0, 2).integers(0, len(shard), size=20)
    x = np.zeros(3)
    for t, i in enumerate(list(idx_a) + list(idx_b)):
        b = shard.features[i]
        x = x - 2.0 * sched.learning_rate(t) * (b @ x - shard.labels[i]) * b
    assert np.allclose(resumed.iterate, x, atol=1e-12)
    assert resumed.n_steps == 20


def test_idle_continuation_rejects_diverged_reports():
    shard, _ = _shard(m=50, d=3, noise=0.0, seed=13)
    sched = StepSchedule.constant(50.0)
    with np.errstate(over="ignore", invalid="ignore"):
        rep = run_worker_epoch(
            shard, np.ones(3), sched, WorkerBudget.by_iterations(500), 1.0,
            rng.stream(7, rng.SAMPLE, 0, 1),
        )
    assert rep.status == "diverged"
    with pytest.raises(ValueError):
        continue_idle_updates(rep, shard, sched, 1.0, 1.0, rng.stream(7, rng.SAMPLE, 0, 2))


def test_budget_validation():
    # zero budgets are legal and do no work; negatives are rejected
    shard, _ = _shard()
    rep = run_worker_epoch(
        shard, np.zeros(3), StepSchedule.constant(0.01),
        WorkerBudget.by_time(0.0), 1.0, rng.stream(8, rng.SAMPLE, 0, 1),
    )
    assert rep.n_steps == 0 and np.array_equal(rep.iterate, np.zeros(3))
    with pytest.raises(ValueError):
        WorkerBudget.by_time(-0.1)
    with pytest.raises(ValueError):
        WorkerBudget.by_iterations(-1)
    with pytest.raises(ValueError):
        run_worker_epoch(
            shard, np.zeros(3), StepSchedule.constant(0.01),
            WorkerBudget.by_iterations(5), -1.0, rng.stream(8, rng.SAMPLE, 0, 1),
        )
    with pytest.raises(ValueError):
        run_worker_epoch(
            shard, np.zeros(4), StepSchedule.constant(0.01),
            WorkerBudget.by_iterations(5), 1.0, rng.stream(8, rng.SAMPLE, 0, 1),
        )
