import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transfer_explore import BisimConfig, TabularMdp, TransferTable, compute_transfer, greedy_policy, lax_bisim_metric, q_init_from_transfer, value_iteration
from transfer_explore.bisim import state_metric
from transfer_explore.envs import grid_to_mdp, parse_grid
from transfer_explore.mdp import policy_evaluation
from transfer_explore.transfer import verify_advantage_bound, verify_state_value_bound, verify_value_bound

from oracles import bellman_oracle, random_mdp_arrays

SMALL_ROOMS = """\
#######
#..#..#
#.....#
#..#.G#
#######"""


def _solve(mdp):
    q = value_iteration(mdp, tolerance=1e-12)
    return q, greedy_policy(q)


def _theory_pair(seed, S1, S2, A1, A2, gamma=0.9):
    rng = np.random.default_rng(seed)
    P1, R1, _, t1 = random_mdp_arrays(rng, S1, A1, gamma, terminal=seed % 2 == 0)
    P2, R2, _, t2 = random_mdp_arrays(rng, S2, A2, gamma, terminal=seed % 3 == 0)
    src, tgt = TabularMdp(P1, R1, gamma, terminal=t1), TabularMdp(P2, R2, gamma, terminal=t2)
    q1, pi1 = _solve(src)
    q2, _ = _solve(tgt)
    metric = lax_bisim_metric(src, pi1, tgt, BisimConfig.theory(gamma))
    return src, tgt, q1, q2, metric


def test_lower_bound_arithmetic():
    t = compute_transfer([1.0], np.full((1, 2, 1), 0.3))
    np.testing.assert_allclose(t.lower_bound, [[0.7, 0.7]])
    assert list(t.s_match) == [0, 0]


def test_identity_transfer_is_optimal():
    mdp = grid_to_mdp(parse_grid(SMALL_ROOMS))
    q, pi = _solve(mdp)
    m = lax_bisim_metric(mdp, pi, mdp, BisimConfig(1.0, 0.95, 1e-10, 5000))
    t = compute_transfer(q.state_values, m)
    s = np.arange(mdp.num_states)
    np.testing.assert_allclose(q.values[s, t.transferred_action], q.state_values, atol=1e-9)


def test_matches_brute_force_enumeration():
    rng = np.random.default_rng(12)
    P1, R1, g, _ = random_mdp_arrays(rng, 4, 2)
    P2, R2, _, _ = random_mdp_arrays(rng, 5, 3)
    src, tgt = TabularMdp(P1, R1, g), TabularMdp(P2, R2, g)
    q1, pi1 = _solve(src)
    m = lax_bisim_metric(src, pi1, tgt, BisimConfig(0.1, 0.9, 1e-9, 1000))
    t = compute_transfer(q1.state_values, m)
    for s2 in range(5):
        best, best_lb = None, -np.inf
        for s1 in range(4):
            lb = q1.state_values[s1] - min(m.d[s1, s2, a] for a in range(3))
            if lb > best_lb:
                best, best_lb = s1, lb
        assert t.s_match[s2] == best
        dists = [m.d[best, s2, a] for a in range(3)]
        assert t.transferred_action[s2] == dists.index(min(dists))
        np.testing.assert_array_equal(t.advantage[s2], -np.array(dists))


def test_identical_mdps_no_violations():
    mdp = TabularMdp(*random_mdp_arrays(np.random.default_rng(1), 6, 3)[:3])
    q, pi = _solve(mdp)
    m = lax_bisim_metric(mdp, pi, mdp, BisimConfig.theory(mdp.discount))
    t = compute_transfer(q.state_values, m, m.config.variant)
    assert verify_value_bound(q.state_values, q, m) == []
    assert verify_advantage_bound(q, t, m) == []


@pytest.mark.parametrize("seed, sizes", [(0, (5, 7, 2, 3)), (1, (12, 9, 4, 2)), (2, (20, 20, 4, 4)), (3, (3, 15, 1, 4)), (4, (8, 8, 3, 3))])
def test_random_pairs_satisfy_bounds(seed, sizes):
    src, tgt, q1, q2, m = _theory_pair(seed, *sizes)
    assert m.converged
    assert verify_value_bound(q1.state_values, q2, m) == []
    assert verify_state_value_bound(q1.state_values, q2, m) == []
    t = compute_transfer(q1.state_values, m, m.config.variant)
    assert verify_advantage_bound(q2, t, m) == []
    # lower bounds never exceed the matched target value
    assert np.all(t.lower_bound <= q2.state_values[None, :] + m.config.slack() + 1e-8)


def test_verifiers_flag_a_broken_metric():
    src, tgt, q1, q2, m = _theory_pair(5, 6, 6, 2, 2)
    broken = np.zeros_like(m.d)
    assert verify_value_bound(q1.state_values, q2, broken, slack=0.0)


def test_q_init_identity_is_q_star():
    mdp = grid_to_mdp(parse_grid(SMALL_ROOMS))
    q, pi = _solve(mdp)
    m = lax_bisim_metric(mdp, pi, mdp, BisimConfig(1.0, 0.95, 1e-10, 5000))
    t = compute_transfer(q.state_values, m)
    q0 = q_init_from_transfer(mdp, t, tolerance=1e-10)
    np.testing.assert_allclose(q0.values, q.values, atol=2e-10 / (1 - mdp.discount))


def test_q_init_is_policy_evaluation():
    src, tgt, q1, q2, m = _theory_pair(6, 4, 6, 2, 3)
    t = compute_transfer(q1.state_values, m)
    q0 = q_init_from_transfer(tgt, t)
    np.testing.assert_array_equal(q0.values, policy_evaluation(tgt, t.policy).values)
    expected = bellman_oracle(tgt.transition, tgt.reward, tgt.discount, sweeps=400, policy=list(t.transferred_action))
    np.testing.assert_allclose(q0.values, expected, atol=1e-8)


def test_q_init_lower_bound_mode():
    src, tgt, q1, q2, m = _theory_pair(7, 4, 6, 2, 3)
    t = compute_transfer(q1.state_values, m)
    q0 = q_init_from_transfer(tgt, t, mode="lower_bound")
    cols = np.arange(6)
    np.testing.assert_allclose(q0.values, q1.state_values[t.s_match][:, None] - m.d[t.s_match, cols, :])
    with pytest.raises(ValueError):
        q_init_from_transfer(tgt, t, mode="copy")


def test_table_round_trip(tmp_path):
    src, tgt, q1, q2, m = _theory_pair(8, 4, 6, 2, 3)
    t = compute_transfer(q1.state_values, m)
    t.save(tmp_path / "t.npz")
    back = TransferTable.load(tmp_path / "t.npz")
    for name in ("s_match", "lower_bound", "transferred_action", "advantage", "matched_value"):
        np.testing.assert_array_equal(getattr(back, name), getattr(t, name))


tables = st.builds(
    lambda seed, S1, S2, A2: np.random.default_rng(seed).random((S1, S2, A2)),
    st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6), st.integers(1, 4),
)


@settings(max_examples=60, deadline=None)
@given(tables, st.sampled_from(["optimistic", "pessimistic"]))
def test_prop_transferred_action_maximises_advantage(d, variant):
    v1 = np.random.default_rng(int(d.sum() * 1e6)).random(d.shape[0])
    t = compute_transfer(v1, d, variant)
    rows = np.arange(d.shape[1])
    np.testing.assert_array_equal(t.advantage[rows, t.transferred_action], t.advantage.max(axis=1))
    assert np.all(t.advantage <= 0)
    np.testing.assert_array_equal(t.lower_bound, v1[:, None] - state_metric(d, variant).dprime)


@settings(max_examples=60, deadline=None)
@given(tables, st.integers(-1000, 1000))
def test_prop_uniform_value_shift(d, c):
    v1 = np.round(np.random.default_rng(7).random(d.shape[0]), 4)
    d = np.round(d, 4)
    a = compute_transfer(v1, d)
    b = compute_transfer(v1 + c, d)
    np.testing.assert_array_equal(a.s_match, b.s_match)
    np.testing.assert_array_equal(a.transferred_action, b.transferred_action)
    np.testing.assert_allclose(b.lower_bound - a.lower_bound, c, atol=1e-9)
