import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from transfer_explore import TransportProblem, ValidationError, kantorovich
from transfer_explore.ot import emd, kantorovich_with_plan

from oracles import lp_vertex_oracle, pot_emd, random_rational, random_rational_simplex


def test_identical_point_masses():
    assert emd([0, 1, 0], [0, 1, 0], 1 - np.eye(3)) == 0.0


def test_point_masses_force_plan():
    cost = np.arange(12, dtype=float).reshape(3, 4)
    value, plan = kantorovich_with_plan(TransportProblem([0, 0, 1], [0, 1, 0, 0], cost))
    assert value == cost[2, 1]
    expected = np.zeros((3, 4))
    expected[2, 1] = 1
    np.testing.assert_array_equal(plan, expected)


def test_two_by_two_value():
    # feasible plans are [[t, .7-t], [.4-t, t-.1]]; the cost 1.1-2t is least at t=.4
    assert emd([0.7, 0.3], [0.4, 0.6], [[0, 1], [1, 0]]) == pytest.approx(0.3, abs=1e-12)


def test_uniform_diagonal_plan():
    value, plan = kantorovich_with_plan(TransportProblem(np.full(4, 0.25), np.full(4, 0.25), 1 - np.eye(4)))
    assert value == 0.0
    np.testing.assert_allclose(plan, np.eye(4) / 4)


def test_random_four_by_four_matches_vertex_oracle():
    rng = np.random.default_rng(4)
    for _ in range(20):
        mu, nu = random_rational_simplex(rng, 4), random_rational_simplex(rng, 4)
        cost = random_rational(rng, (4, 4))
        value, plan = kantorovich_with_plan(TransportProblem(
            np.array(mu, dtype=float), np.array(nu, dtype=float), cost.astype(float)))
        assert value == pytest.approx(float(lp_vertex_oracle(mu, nu, cost)), abs=1e-9)
        np.testing.assert_allclose(plan.sum(axis=1), np.array(mu, dtype=float), atol=1e-8)
        np.testing.assert_allclose(plan.sum(axis=0), np.array(nu, dtype=float), atol=1e-8)
        assert np.sum(plan * cost.astype(float)) == pytest.approx(value, abs=1e-12)


def test_larger_instances_match_network_simplex():
    rng = np.random.default_rng(9)
    for m, n in [(20, 30), (50, 7), (1, 40), (64, 64)]:
        mu = rng.random(m) * (rng.random(m) > 0.3)
        nu = rng.random(n) * (rng.random(n) > 0.3)
        mu[0] += 0.1
        nu[-1] += 0.1
        mu /= mu.sum()
        nu /= nu.sum()
        cost = rng.random((m, n))
        assert emd(mu, nu, cost) == pytest.approx(pot_emd(mu, nu, cost), abs=1e-9)


def test_zero_mass_rows_come_back_as_zeros():
    value, plan = kantorovich_with_plan(TransportProblem([0.5, 0, 0.5], [0, 1.0], np.ones((3, 2))))
    assert value == 1.0
    assert np.all(plan[1] == 0) and np.all(plan[:, 0] == 0)


def test_marginal_checks():
    with pytest.raises(ValidationError):
        TransportProblem([0.5, 0.4], [1.0], np.zeros((2, 1)))
    with pytest.raises(ValidationError):
        TransportProblem([1.0], [1.0], [[-1.0]])
    with pytest.raises(ValidationError):
        TransportProblem([1.0], [0.5, 0.5], np.zeros((1, 3)))
    p = TransportProblem([0.5, 0.5 + 5e-10], [1.0], np.zeros((2, 1)))
    assert p.mu.sum() == pytest.approx(1.0, abs=1e-15)


def _problems(max_n=6):
    def build(m, n, seed, scale):
        rng = np.random.default_rng(seed)
        mu = rng.dirichlet(np.ones(m))
        nu = rng.dirichlet(np.ones(n))
        return mu, nu, rng.random((m, n)) * scale

    return st.builds(build, st.integers(1, max_n), st.integers(1, max_n), st.integers(0, 2**32 - 1),
                     st.floats(0.01, 100))


@settings(max_examples=60, deadline=None)
@given(_problems())
def test_prop_bounds_and_symmetry(problem):
    mu, nu, cost = problem
    value = emd(mu, nu, cost)
    assert -1e-12 <= value <= cost.max() + 1e-9
    assert emd(nu, mu, cost.T) == pytest.approx(value, rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(_problems(), st.floats(0, 10))
def test_prop_scale_equivariance(problem, alpha):
    mu, nu, cost = problem
    assert emd(mu, nu, alpha * cost) == pytest.approx(alpha * emd(mu, nu, cost), rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(_problems(), arrays(np.float64, 36, elements=st.floats(0, 1)))
def test_prop_monotone_in_cost(problem, bump):
    mu, nu, cost = problem
    larger = cost + bump[: cost.size].reshape(cost.shape)
    assert emd(mu, nu, cost) <= emd(mu, nu, larger) + 1e-9


@settings(max_examples=60, deadline=None)
@given(_problems(8))
def test_prop_plan_feasible_and_dual_certified(problem):
    # the solver raises if its c-transformed dual disagrees with the primal
    mu, nu, cost = problem
    value, plan = kantorovich_with_plan(TransportProblem(mu, nu, cost))
    assert np.all(plan >= 0)
    np.testing.assert_allclose(plan.sum(axis=1), mu, atol=1e-8)
    np.testing.assert_allclose(plan.sum(axis=0), nu, atol=1e-8)
    assert float(np.sum(plan * cost)) == pytest.approx(value, abs=1e-9)
    assume(value > 0)
    assert kantorovich(TransportProblem(mu, nu, cost)) == value
