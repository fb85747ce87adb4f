import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transfer_explore import BisimConfig, DeterministicPolicy, TabularMdp, ValidationError, greedy_policy, lax_bisim_metric, value_iteration
from transfer_explore.bisim import (
    cache_key,
    cached_metric,
    load_metric,
    read_metric_csv,
    save_metric,
    state_metric,
    write_metric_csv,
)
from transfer_explore.envs import grid_to_mdp, parse_grid

from oracles import dense_bisim_oracle, random_mdp_arrays, vertex_emd

TINY_ROOMS = """\
#######
#..#..#
#.....#
#..#.G#
#######"""


def solved(mdp):
    return greedy_policy(value_iteration(mdp, tolerance=1e-11))


def test_state_metric_single_action():
    d = np.random.default_rng(0).random((3, 4, 1))
    np.testing.assert_array_equal(state_metric(d, "optimistic").dprime, d[..., 0])
    np.testing.assert_array_equal(state_metric(d, "pessimistic").dprime, d[..., 0])


def test_state_metric_two_actions():
    d = np.array([[[0.3, 0.1]]])
    assert state_metric(d, "optimistic").dprime[0, 0] == 0.1
    assert state_metric(d, "pessimistic").dprime[0, 0] == 0.3
    with pytest.raises(ValidationError):
        state_metric(d, "median")


def test_identity_pair_zero_on_optimal_actions():
    mdp = grid_to_mdp(parse_grid(TINY_ROOMS))
    pi = solved(mdp)
    m = lax_bisim_metric(mdp, pi, mdp, BisimConfig(0.1, 0.9, 1e-9, 1000))
    assert m.converged
    s = np.arange(mdp.num_states)
    np.testing.assert_allclose(m.d[s, s, pi.action_of], 0.0, atol=1e-12)


def test_zero_transport_weight_is_reward_gap():
    src = TabularMdp(np.ones((1, 1, 1)), [[1.0]], 0.9)
    tgt = TabularMdp(np.ones((1, 2, 1)), [[0.0, 1.0]], 0.9)
    m = lax_bisim_metric(src, DeterministicPolicy([0]), tgt, BisimConfig(0.1, 0.0, 1e-9, 10))
    assert m.iterations_run <= 2
    np.testing.assert_allclose(m.d[0, 0], [0.1, 0.0])


def _pair(seed, S1=4, S2=5, A1=2, A2=2, max_support=3):
    rng = np.random.default_rng(seed)
    P1, R1, g, _ = random_mdp_arrays(rng, S1, A1, max_support=max_support)
    P2, R2, _, _ = random_mdp_arrays(rng, S2, A2, max_support=max_support)
    return TabularMdp(P1, R1, g), TabularMdp(P2, R2, g)


@pytest.mark.parametrize("variant", ["optimistic", "pessimistic"])
def test_small_pair_matches_dense_oracle(variant):
    src, tgt = _pair(21)
    pi = solved(src)
    cfg = BisimConfig(0.1, 0.9, 1e-9, 1000, variant)
    m = lax_bisim_metric(src, pi, tgt, cfg)
    expected = dense_bisim_oracle(src.transition, src.reward, pi.action_of, tgt.transition, tgt.reward,
                                  0.1, 0.9, 1e-9, 1000, variant, vertex_emd)
    np.testing.assert_allclose(m.d, expected, atol=1e-7)


def test_iterates_nondecreasing_and_contracting():
    src, tgt = _pair(5, 6, 7, 3, 3, max_support=4)
    pi = solved(src)
    prev = None
    for k in range(1, 8):
        d = lax_bisim_metric(src, pi, tgt, BisimConfig(0.5, 0.8, 1e-12, k)).d
        if prev is not None:
            assert np.all(d >= prev - 1e-12)
        prev = d
    hist = lax_bisim_metric(src, pi, tgt, BisimConfig(0.5, 0.8, 1e-10, 500)).history
    for a, b in zip(hist, hist[1:]):
        assert b <= 0.8 * a + 1e-9


def test_geometric_bound_on_entries():
    src, tgt = _pair(8, 6, 6, 2, 3)
    pi = solved(src)
    c_r, c_t = 0.7, 0.85
    m = lax_bisim_metric(src, pi, tgt, BisimConfig(c_r, c_t, 1e-9, 2000))
    r1 = src.reward[np.arange(src.num_states), pi.action_of]
    gap = np.abs(r1[:, None, None] - tgt.reward[None, :, :]).max()
    assert np.all(m.d >= 0)
    assert m.d.max() <= c_r * gap / (1 - c_t) + 1e-9


def test_reward_free_copies_are_at_distance_zero():
    P, _, _, _ = random_mdp_arrays(np.random.default_rng(2), 5, 2)
    mdp = TabularMdp(P, np.full((5, 2), 0.25), 0.9)
    m = lax_bisim_metric(mdp, solved(mdp), mdp, BisimConfig(1.0, 0.9, 1e-10, 1000))
    np.testing.assert_allclose(m.d, 0.0, atol=1e-12)


def test_truncated_run_reports_status():
    src, tgt = _pair(3)
    m = lax_bisim_metric(src, solved(src), tgt, BisimConfig(0.1, 0.9, 1e-12, 5))
    assert m.iterations_run == 5 and not m.converged
    assert m.sup_change_last == m.history[-1] > 0


def test_rejects_suboptimal_source_policy():
    src, tgt = _pair(3)
    bad = DeterministicPolicy(1 - solved(src).action_of)
    with pytest.raises(ValidationError):
        lax_bisim_metric(src, bad, tgt)


def test_config_validation_and_presets():
    with pytest.raises(ValidationError):
        BisimConfig(threshold=0)
    with pytest.raises(ValidationError):
        BisimConfig(variant="lax")
    assert BisimConfig.for_target("SixLargeRooms").c_R == 0.2
    assert BisimConfig.for_target("Taxi") == BisimConfig.for_target("FourLargeRooms")
    assert BisimConfig.theory(0.9).c_T == 0.9
    assert BisimConfig(1.0, 0.5, 1e-3).slack() == pytest.approx(2e-3)


def test_cache_round_trip(tmp_path, caplog):
    src, tgt = _pair(6)
    pi = solved(src)
    cfg = BisimConfig(0.3, 0.6, 1e-8, 100)
    first = cached_metric(src, pi, tgt, cfg, tmp_path)
    path = tmp_path / f"metric_{cache_key(src, pi, tgt, cfg)}.npz"
    digest = path.read_bytes()
    again = cached_metric(src, pi, tgt, cfg, tmp_path)
    np.testing.assert_array_equal(first.d, again.d)
    assert path.read_bytes() == digest
    path.write_bytes(b"not a metric")
    with caplog.at_level(logging.WARNING):
        fixed = cached_metric(src, pi, tgt, cfg, tmp_path)
    assert "recomputing" in caplog.text
    np.testing.assert_array_equal(fixed.d, first.d)
    assert path.read_bytes() == digest


def test_cache_key_depends_on_config():
    src, tgt = _pair(6)
    pi = solved(src)
    assert cache_key(src, pi, tgt, BisimConfig()) != cache_key(src, pi, tgt, BisimConfig(c_R=0.2))


def test_metric_files(tmp_path):
    src, tgt = _pair(7)
    m = lax_bisim_metric(src, solved(src), tgt, BisimConfig(0.3, 0.6, 1e-8, 100))
    save_metric(m, tmp_path / "m.npz")
    back = load_metric(tmp_path / "m.npz")
    np.testing.assert_array_equal(back.d, m.d)
    assert (back.iterations_run, back.converged, back.config) == (m.iterations_run, m.converged, m.config)
    write_metric_csv(m, tmp_path / "m.csv")
    np.testing.assert_array_equal(read_metric_csv(tmp_path / "m.csv", m.d.shape), m.d)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 5), st.integers(1, 3),
       st.floats(0.0, 2.0), st.floats(0.0, 0.95))
def test_prop_optimistic_below_pessimistic(seed, S1, S2, A2, c_r, c_t):
    rng = np.random.default_rng(seed)
    P1, R1, g, _ = random_mdp_arrays(rng, S1, 2)
    P2, R2, _, _ = random_mdp_arrays(rng, S2, A2)
    src, tgt = TabularMdp(P1, R1, g), TabularMdp(P2, R2, g)
    pi = solved(src)
    lo = lax_bisim_metric(src, pi, tgt, BisimConfig(c_r, c_t, 1e-8, 300, "optimistic"))
    hi = lax_bisim_metric(src, pi, tgt, BisimConfig(c_r, c_t, 1e-8, 300, "pessimistic"))
    assert np.all(state_metric(lo, "optimistic").dprime <= state_metric(lo, "pessimistic").dprime)
    # a larger ground metric can only enlarge the fixed point
    assert np.all(lo.d <= hi.d + 1e-7)
