import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transfer_explore import EnvDescriptor, GridSpec, Simulator, build_rooms, build_taxi, grid_to_mdp, parse_grid, preset, render_grid
from transfer_explore.envs import TAXI_ACTIONS, ConfigurationError, ParseError, taxi_decode, taxi_state

OPEN_3X3 = "...\n...\n..."


def _cell(spec, r, c):
    return spec.positions().index((r, c))


def test_four_small_rooms_has_one_goal():
    spec, mdp = build_rooms(2, 2, 5)
    assert sum(row.count("G") for row in spec.cells) == 1
    assert spec.goal_reward == 1.0
    assert mdp.terminal.sum() == 1
    assert mdp.reward.max() == pytest.approx(0.9)


def test_slip_split_interior_cell():
    spec = parse_grid(OPEN_3X3)
    mdp = grid_to_mdp(spec)
    s = _cell(spec, 1, 1)
    row = mdp.transition[s, 0]  # up
    assert row[_cell(spec, 0, 1)] == pytest.approx(0.9)
    for rc in [(2, 1), (1, 0), (1, 2), (1, 1)]:
        assert row[_cell(spec, *rc)] == pytest.approx(0.025)
    assert row.sum() == pytest.approx(1.0, abs=1e-12)


def test_blocked_mass_stays():
    spec = parse_grid("#.#\n#.#\n###")
    mdp = grid_to_mdp(spec)
    s = _cell(spec, 1, 1)
    row = mdp.transition[s, 0]
    assert row[_cell(spec, 0, 1)] == pytest.approx(0.9)
    assert row[s] == pytest.approx(0.1)


def test_deterministic_when_no_slip():
    mdp = grid_to_mdp(GridSpec(cells=tuple(OPEN_3X3.split("\n")), slip=0.0))
    assert set(np.unique(mdp.transition)) <= {0.0, 1.0}


def test_gravity_shifts_mass_down():
    spec = GridSpec(cells=tuple(OPEN_3X3.split("\n")), gravity_slide=0.1)
    mdp = grid_to_mdp(spec)
    s = _cell(spec, 1, 1)
    row = mdp.transition[s, 2]  # left
    assert row[_cell(spec, 1, 0)] == pytest.approx(0.9 * 0.9)
    assert row[_cell(spec, 2, 1)] == pytest.approx(0.025 * 0.9 + 0.1)
    assert row.sum() == pytest.approx(1.0, abs=1e-12)


def test_gravity_variant_layout():
    spec, _ = build_rooms(2, 2, 8, "gravity")
    assert spec.gravity_slide == 0.1


def test_three_actions_variant():
    spec, mdp = build_rooms(2, 2, 8, "three_actions")
    assert spec.action_set == ("left", "right", "down")
    assert mdp.num_actions == 3
    interior = _cell(spec, 2, 2)
    row = mdp.transition[interior, 0]
    assert row[_cell(spec, 2, 1)] == pytest.approx(0.9)
    assert row[interior] == pytest.approx(0.1 / 3)
    assert row[_cell(spec, 1, 2)] == 0.0  # nothing moves up


@pytest.mark.parametrize("variant", ["two_goals", "firepit", "no_goal", "negative_hallways"])
def test_reward_variants_share_dynamics_off_terminals(variant):
    # goal and firepit cells absorb, so rows agree wherever neither layout terminates
    _, base = build_rooms(2, 2, 8)
    _, other = build_rooms(2, 2, 8, variant)
    assert other.num_states == base.num_states
    live = ~(base.terminal | other.terminal)
    np.testing.assert_array_equal(base.transition[live], other.transition[live])


def test_negative_hallways_penalise_hallways():
    spec, mdp = build_rooms(2, 2, 8, "negative_hallways")
    assert spec.hallway_reward == -1.0
    assert (mdp.reward < 0).any()


def test_variant_needs_two_rooms():
    with pytest.raises(ConfigurationError):
        build_rooms(1, 1, 5, "negative_hallways")
    with pytest.raises(ConfigurationError):
        build_rooms(2, 2, 2)


def test_parse_single_row():
    spec = parse_grid("G.")
    assert (spec.rows, spec.cols) == (1, 2)
    assert spec.kind(0, 0) == "G"


def test_parse_border_walls():
    spec = parse_grid("####\n#..#\n####")
    assert all(ch == "#" for ch in spec.cells[0] + spec.cells[-1])
    assert len(spec.positions()) == 2


@pytest.mark.parametrize("text, line, column", [("..\n...", 2, 3), ("..\n.x", 2, 2)])
def test_parse_errors_locate(text, line, column):
    with pytest.raises(ParseError) as info:
        parse_grid(text)
    assert (info.value.line, info.value.column) == (line, column)


@pytest.mark.parametrize("args", [(2, 2, 5, "default"), (3, 2, 8, "gravity"), (2, 2, 8, "three_actions"), (3, 3, 4, "firepit")])
def test_render_round_trip(args):
    spec, _ = build_rooms(*args)
    assert parse_grid(render_grid(spec)) == spec


def test_taxi_counts_and_drop():
    mdp = build_taxi()
    assert mdp.num_states == 54 and mdp.num_actions == 6
    assert TAXI_ACTIONS == ("South", "North", "West", "East", "Pickup", "Drop")
    s = taxi_state(2, 2, 2, 1)  # at the bottom-right depot, passenger aboard, destination there
    drop = TAXI_ACTIONS.index("Drop")
    nxt = int(np.argmax(mdp.transition[s, drop]))
    assert mdp.transition[s, drop, nxt] == 1.0
    assert mdp.terminal[nxt] and taxi_decode(nxt) == (2, 2, 1, 1)
    assert mdp.reward[s, drop] == 20.0
    assert mdp.reward[taxi_state(1, 1, 0, 1), drop] == -10.0
    assert mdp.reward[taxi_state(1, 1, 0, 1), 0] == -1.0


def test_taxi_terminal_states_unreachable_at_start():
    mdp = build_taxi()
    assert np.all(mdp.initial_distribution[mdp.terminal] == 0)


@pytest.mark.parametrize("name", ["FourSmallRooms", "FourLargeRooms", "SixLargeRooms", "NineLargeRooms", "Taxi"])
def test_presets_are_stochastic(name):
    mdp = preset(name).build()
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)


def test_walls_unreachable():
    spec, mdp = build_rooms(3, 2, 8)
    # states are non-wall cells by construction; check no move crosses a wall
    cells = spec.positions()
    for s, (r, c) in enumerate(cells):
        for t in np.flatnonzero(mdp.transition[s].sum(axis=0)):
            r2, c2 = cells[t]
            assert abs(r - r2) + abs(c - c2) <= 1


def test_descriptor_text_round_trip():
    desc = preset("SixLargeRooms", goal_room=3, variant="firepit")
    assert EnvDescriptor.from_text(desc.to_text()) == desc
    with pytest.raises(ConfigurationError):
        EnvDescriptor.from_mapping({"env": "Nowhere"})


def test_simulator_matches_transition_row():
    _, mdp = build_rooms(2, 2, 5)
    sim = Simulator(mdp, rng_seed=11)
    n = 100_000
    s, a = 7, 3
    draws = sim.sample_next(s, a, n)
    freq = np.bincount(draws, minlength=mdp.num_states) / n
    p = mdp.transition[s, a]
    se = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(freq - p) <= 3 * se + 1e-12)


def test_simulator_reset_from_initial():
    _, mdp = build_rooms(2, 2, 5)
    sim = Simulator(mdp, rng_seed=1)
    starts = {sim.reset() for _ in range(500)}
    assert not any(mdp.terminal[list(starts)])
    sim.reset()
    nxt, reward, done = sim.step(0)
    assert 0 <= nxt < mdp.num_states and isinstance(done, bool)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(3, 6), st.sampled_from(["default", "gravity", "three_actions", "no_goal"]),
       st.floats(0, 0.5))
def test_prop_rooms_rows_stochastic(rx, ry, size, variant, slip):
    _, mdp = build_rooms(rx, ry, size, variant, slip=slip)
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0, atol=1e-12)
    assert np.all(mdp.transition >= 0)
