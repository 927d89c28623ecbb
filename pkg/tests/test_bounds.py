"""Closed-form bound values, the optimality identity, and the weight QP."""

import math

import numpy as np
import pytest

from anytime_sgd.bounds import (
    BoundInputs,
    expected_distance_bound,
    high_probability_bound,
    optimal_weights,
    variance_bound,
)
from anytime_sgd.problem import ProblemConstants


def _unit_constants():
    return ProblemConstants(smoothness=1.0, radius=1.0, grad_bound=1.0, noise_bound=1.0)


def test_expected_distance_bound_known_values():
    c = _unit_constants()
    one = BoundInputs(c, weights=[1.0], step_counts=[1])
    assert expected_distance_bound(one) == pytest.approx(3.0, rel=1e-12)
    four = BoundInputs(c, weights=[1.0], step_counts=[4])
    assert expected_distance_bound(four) == pytest.approx(1.25, rel=1e-12)


def test_variance_bound_known_values():
    c = _unit_constants()
    one = BoundInputs(c, weights=[1.0], step_counts=[1])
    assert variance_bound(one) == pytest.approx(6.0, rel=1e-12)
    mixed = BoundInputs(c, weights=[0.2, 0.3, 0.5], step_counts=[2, 3, 5])
    assert variance_bound(mixed) == pytest.approx(0.6, rel=1e-12)


def test_high_probability_bound_known_value():
    c = _unit_constants()
    inp = BoundInputs(c, weights=[1.0], step_counts=[1], confidence=math.exp(-1.0))
    assert high_probability_bound(inp) == pytest.approx(6.0 * math.sqrt(109.0), rel=1e-12)
    assert high_probability_bound(inp) == pytest.approx(62.6418390534633, rel=1e-10)


def test_high_probability_bound_vanishes_at_full_confidence():
    c = _unit_constants()
    inp = BoundInputs(c, weights=[1.0], step_counts=[1], confidence=1.0)
    assert high_probability_bound(inp) == 0.0


def test_optimal_weights_are_proportional_to_work():
    q = np.array([2.0, 3.0, 5.0])
    assert np.allclose(optimal_weights(q), [0.2, 0.3, 0.5], atol=1e-15)


def test_variance_at_optimal_weights_collapses_to_total_work():
    # with weights proportional to work, the bound times total work is a
    # constant of the problem alone
    gen = np.random.default_rng(17)
    for _ in range(100):
        n = int(gen.integers(1, 10))
        q = gen.integers(1, 10_000, size=n).astype(float)
        c = ProblemConstants(
            smoothness=float(gen.uniform(0.1, 10)),
            radius=float(gen.uniform(0.1, 10)),
            grad_bound=float(gen.uniform(0.1, 10)),
            noise_bound=float(gen.uniform(0.05, 0.2)),
        )
        inp = BoundInputs(c, weights=optimal_weights(q), step_counts=q)
        lhs = variance_bound(inp) * q.sum()
        rhs = 2.0 * c.radius**2 * (c.grad_bound**2 + 2.0 * c.noise_bound**2)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def _project_to_simplex(y):
    """Euclidean projection onto the probability simplex."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, len(y) + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def _qp_minimize_weighted_square(q, iters=40_000):
    """Projected gradient descent on sum(w^2 / q) over the simplex."""
    n = len(q)
    w = np.full(n, 1.0 / n)
    lip = 2.0 / q.min()
    step = 1.0 / lip
    for _ in range(iters):
        grad = 2.0 * w / q
        w = _project_to_simplex(w - step * grad)
    return w


def test_projection_oracle_basics():
    assert np.allclose(_project_to_simplex(np.array([0.5, 0.5])), [0.5, 0.5], atol=1e-15)
    out = _project_to_simplex(np.array([10.0, 0.0, 0.0]))
    assert np.allclose(out, [1.0, 0.0, 0.0], atol=1e-12)
    out = _project_to_simplex(np.array([-5.0, -5.0]))
    assert abs(out.sum() - 1.0) < 1e-12


def test_closed_form_weights_match_the_qp_oracle():
    gen = np.random.default_rng(23)
    for _ in range(10):
        n = int(gen.integers(2, 9))
        q = gen.integers(1, 500, size=n).astype(float)
        numeric = _qp_minimize_weighted_square(q)
        assert np.allclose(optimal_weights(q), numeric, atol=1e-6)


def test_no_simplex_point_beats_the_closed_form():
    gen = np.random.default_rng(29)
    q = gen.integers(1, 200, size=6).astype(float)
    c = ProblemConstants(smoothness=2.0, radius=1.5, grad_bound=4.0, noise_bound=1.0)
    best = variance_bound(BoundInputs(c, weights=optimal_weights(q), step_counts=q))
    for _ in range(2000):
        w = gen.dirichlet(np.ones(6))
        val = variance_bound(BoundInputs(c, weights=w, step_counts=q))
        assert val >= best - 1e-9


def test_all_bounds_shrink_as_any_worker_does_more_steps():
    # with weights held fixed, more steps can only lower each bound
    gen = np.random.default_rng(31)
    c = ProblemConstants(smoothness=1.0, radius=2.0, grad_bound=5.0, noise_bound=2.0)
    for _ in range(50):
        n = int(gen.integers(2, 7))
        q = gen.integers(1, 100, size=n).astype(float)
        w = gen.dirichlet(np.ones(n))
        before = BoundInputs(c, weights=w, step_counts=q, start_gap=1.0, confidence=0.1)
        j = int(gen.integers(0, n))
        q2 = q.copy()
        q2[j] += float(gen.integers(1, 50))
        after = BoundInputs(c, weights=w, step_counts=q2, start_gap=1.0, confidence=0.1)
        assert expected_distance_bound(after) <= expected_distance_bound(before) + 1e-12
        assert variance_bound(after) <= variance_bound(before) + 1e-12
        assert high_probability_bound(after) <= high_probability_bound(before) + 1e-12


def test_inputs_validation():
    c = _unit_constants()
    with pytest.raises(ValueError):
        BoundInputs(c, weights=[0.5, 0.4], step_counts=[1, 1])
    with pytest.raises(ValueError):
        BoundInputs(c, weights=[1.0], step_counts=[0])
    with pytest.raises(ValueError):
        BoundInputs(c, weights=[1.0], step_counts=[1], confidence=0.0)
    with pytest.raises(ValueError):
        BoundInputs(c, weights=[1.0], step_counts=[1], start_gap=-1.0)
    with pytest.raises(ValueError):
        high_probability_bound(BoundInputs(c, weights=[1.0], step_counts=[1]))
    with pytest.raises(ValueError):
        optimal_weights(np.array([1.0, 0.5]))
