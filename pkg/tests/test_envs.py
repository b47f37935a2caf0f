"""Environment dynamics checks: pinned reward arithmetic, distributional
tests on resets, invariants under random play, and scalar-vs-batch
equivalence (the batch implementations must reproduce the reference
scalar dynamics bit for bit / to float tolerance)."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from claplab.envs import (
    DrivingBatch,
    DrivingConfig,
    DrivingGame,
    DrivingState,
    Gridworld,
    GridworldBatch,
    GridworldConfig,
    GridworldState,
    driving_config_from_mapping,
    gridworld_config_from_mapping,
)

# ---------------------------------------------------------------------------
# Gridworld
# ---------------------------------------------------------------------------


def test_grid_reset_deterministic():
    env = Gridworld(GridworldConfig(n_agents=3))
    assert env.reset(123) == env.reset(123)
    assert env.reset(123) != env.reset(124)


def test_grid_reset_goal_and_position_distributions():
    cfg = GridworldConfig(n_agents=2)
    batch = GridworldBatch(cfg, n_envs=100_000, base_seed=0)
    for field in (batch.goals, batch.positions):
        cells = field[:, 0, 0] * 5 + field[:, 0, 1]
        counts = np.bincount(cells, minlength=25)
        res = stats.chisquare(counts)
        assert res.pvalue > 1e-3, f"uniformity rejected: p={res.pvalue}"


def test_grid_close_guess_within_one_tile():
    cfg = GridworldConfig(n_agents=3)
    batch = GridworldBatch(cfg, n_envs=10_000, base_seed=7)
    for i in range(3):
        true_goal = batch.goals[:, (i + 1) % 3, :]
        cheb = np.abs(batch.guesses[:, i, :] - true_goal).max(axis=-1)
        assert cheb.max() <= 1
    assert batch.guesses.min() >= 0 and batch.guesses.max() <= 4


def test_grid_close_guess_uniform_over_candidates():
    cfg = GridworldConfig(n_agents=2)
    batch = GridworldBatch(cfg, n_envs=60_000, base_seed=11)
    center = np.all(batch.goals[:, 1, :] == 2, axis=-1)  # goal of agent 1 at (2,2)
    guesses = batch.guesses[center, 0, :]
    cells = (guesses[:, 0] - 1) * 3 + (guesses[:, 1] - 1)
    counts = np.bincount(cells, minlength=9)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_grid_team_reward_none_at_goal():
    env = Gridworld(GridworldConfig(n_agents=3))
    state = GridworldState(
        positions=((0, 0), (0, 4), (4, 4)),
        goals=((2, 2), (2, 2), (2, 2)),
        close_guesses=((2, 2), (2, 2), (2, 2)),
        reached=(False, False, False),
        t=0,
    )
    _, reward, done = env.step(state, (4, 4, 4))  # everyone stays
    assert reward == -3.0
    assert not done


def test_grid_reach_and_after_reach_contributions():
    env = Gridworld(GridworldConfig(n_agents=2))
    state = GridworldState(
        positions=((1, 2), (0, 0)),
        goals=((2, 2), (4, 4)),
        close_guesses=((0, 0), (0, 0)),
        reached=(False, False),
        t=0,
    )
    state, reward, _ = env.step(state, (3, 4))  # agent 0 steps right onto goal
    assert reward == 1.0 - 1.0  # +1 reached, -1 for the straggler
    assert state.reached == (True, False)
    state, reward, _ = env.step(state, (4, 4))
    assert reward == -1.0  # reached agent contributes 0 now
    assert state.positions[0] == (2, 2)  # parked


def test_grid_walls_clamp():
    env = Gridworld(GridworldConfig(n_agents=2))
    state = GridworldState(
        positions=((0, 0), (4, 4)),
        goals=((2, 2), (2, 2)),
        close_guesses=((0, 0), (0, 0)),
        reached=(False, False),
        t=0,
    )
    state, _, _ = env.step(state, (2, 3))  # agent 0 left off-grid, 1 right off-grid
    assert state.positions == ((0, 0), (4, 4))


def test_grid_invalid_action_raises():
    env = Gridworld(GridworldConfig(n_agents=2))
    state = env.reset(0)
    with pytest.raises(ValueError):
        env.step(state, (5, 0))


def test_grid_done_at_horizon():
    env = Gridworld(GridworldConfig(n_agents=2))
    state = env.reset(3)
    done = False
    for t in range(10):
        state, _, done = env.step(state, (4, 4))
        if done:
            break
    assert done and state.t <= 10


def test_grid_observe_layout():
    env = Gridworld(GridworldConfig(n_agents=3))
    state = GridworldState(
        positions=((2, 2), (0, 0), (4, 0)),
        goals=((2, 2), (4, 4), (0, 4)),
        close_guesses=((3, 4), (1, 4), (0, 3)),
        reached=(False, False, False),
        t=0,
    )
    obs = env.observe(state, 0)
    assert obs.dim == 49 and env.obs_dim == 49
    assert obs.private_part.shape == (19,)
    # standing on own goal -> center of the proximity window
    assert obs.private_part[4] == 1.0 and obs.private_part[:9].sum() == 1.0
    # close guess one-hots: x=3, y=4
    assert obs.private_part[9 + 3] == 1.0 and obs.private_part[14 + 4] == 1.0
    # rotated position block starts with self (2,2)
    g = obs.global_part
    assert g[2] == 1.0 and g[5 + 2] == 1.0
    assert g[10 + 0] == 1.0 and g[15 + 0] == 1.0  # agent 1 at (0,0)
    assert g[20 + 4] == 1.0 and g[25 + 0] == 1.0  # agent 2 at (4,0)

    # goal two tiles away -> proximity all zeros
    obs1 = env.observe(state, 1)
    assert obs1.private_part[:9].sum() == 0.0
    # agent 1's rotation starts with itself
    assert obs1.global_part[0] == 1.0 and obs1.global_part[5] == 1.0


def test_grid_observe_proximity_offsets():
    env = Gridworld(GridworldConfig(n_agents=2))
    # goal one step right of the agent -> entry (dy=0, dx=+1) = index 5
    state = GridworldState(
        positions=((1, 1), (0, 0)),
        goals=((2, 1), (4, 4)),
        close_guesses=((0, 0), (0, 0)),
        reached=(False, False),
        t=0,
    )
    prox = env.observe(state, 0).private_part[:9]
    assert prox[5] == 1.0 and prox.sum() == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 3))
def test_grid_invariants_random_play(seed, n_agents):
    env = Gridworld(GridworldConfig(n_agents=n_agents))
    rng = np.random.default_rng(seed)
    state = env.reset(seed)
    total, done, prev_reached = 0.0, False, state.reached
    while not done:
        state, r, done = env.step(state, rng.integers(0, 5, n_agents))
        assert -n_agents <= r <= n_agents
        assert all(b or not a for a, b in zip(prev_reached, state.reached))
        prev_reached = state.reached
        total += r
    assert -n_agents * 10 <= total <= n_agents
    assert state.t <= 10


# ---------------------------------------------------------------------------
# Driving game
# ---------------------------------------------------------------------------


def _drive_state(
    pos0=(0.0, 0.0), heading0=0.0, speed0=0.0, slot0=0, min_d0=None, reached0=False
):
    cfg = DrivingConfig()
    goal = cfg.goal_slots[slot0]
    d0 = math.dist(pos0, goal)
    return DrivingState(
        positions=(pos0, (4.5, 0.0)),
        prev_positions=(pos0, (4.5, 0.0)),
        headings=(heading0 % (2 * math.pi), math.pi),
        speeds=(speed0, 0.0),
        goal_slots=(slot0, 4),
        min_goal_distance=(d0 if min_d0 is None else min_d0, 8.5),
        reached=(reached0, False),
        t=0,
    )


def test_drive_reset_deterministic_and_min_d():
    env = DrivingGame(DrivingConfig())
    s1, s2 = env.reset(9), env.reset(9)
    assert s1 == s2
    for i in range(2):
        goal = env.config.goal_slots[s1.goal_slots[i]]
        assert s1.min_goal_distance[i] == pytest.approx(
            math.dist(s1.positions[i], goal)
        )
    assert s1.speeds == (0.0, 0.0) and s1.reached == (False, False)


def test_drive_goal_slot_distribution_uniform():
    batch = DrivingBatch(DrivingConfig(), n_envs=10_000, base_seed=0)
    counts = np.bincount(batch.slots[:, 0], minlength=8)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_drive_progress_reward_pinned_value():
    # 0.5 units closer, no pit: 200 * 0.5 - 0.1 = 99.9
    env = DrivingGame(DrivingConfig(pit_enabled=False))
    state = _drive_state(pos0=(0.0, 0.0), heading0=0.0, speed0=2.3, slot0=0)
    state, (r0, _), _ = env.step(state, (2, 2))  # accelerate: v=2.5, moves 0.5
    assert state.positions[0] == pytest.approx((0.5, 0.0))
    assert r0 == pytest.approx(200 * 0.5 - 0.1)


def test_drive_goal_bonus_added_once_then_zero():
    env = DrivingGame(DrivingConfig(pit_enabled=False))
    state = _drive_state(pos0=(3.45, 0.0), heading0=0.0, speed0=2.3, slot0=0)
    state, (r0, _), _ = env.step(state, (2, 0))
    assert state.reached[0]
    assert r0 == pytest.approx(-0.1 + 200 * 0.5 + 500.0)
    state, (r0, _), _ = env.step(state, (2, 0))
    assert r0 == 0.0  # nothing after the goal (no pit here)


def test_drive_stationary_pays_time_cost_only():
    env = DrivingGame(DrivingConfig(pit_enabled=False))
    state = _drive_state(speed0=0.0)
    _, (r0, _), _ = env.step(state, (0, 0))
    assert r0 == pytest.approx(-0.1)


def test_drive_no_reward_for_moving_away():
    env = DrivingGame(DrivingConfig(pit_enabled=False))
    # heading away from goal slot 0 at (4, 0)
    state = _drive_state(pos0=(0.0, 0.0), heading0=math.pi, speed0=2.0, slot0=0)
    next_state, (r0, _), _ = env.step(state, (0, 0))
    assert r0 == pytest.approx(-0.1)  # progress clamps at 0
    assert next_state.min_goal_distance[0] == state.min_goal_distance[0]


def test_drive_pit_suppresses_progress_but_min_updates():
    cfg = DrivingConfig(pit_enabled=True)
    env = DrivingGame(cfg)
    # inside the pit, driving toward goal slot 0
    state = _drive_state(pos0=(-0.5, 0.0), heading0=0.0, speed0=2.0, slot0=0)
    next_state, (r0, _), _ = env.step(state, (2, 0))
    assert math.dist(next_state.positions[0], cfg.pit_center) < cfg.pit_radius
    assert r0 == pytest.approx(-cfg.c_pit - cfg.c_time)
    assert next_state.min_goal_distance[0] < state.min_goal_distance[0]


def test_drive_pit_penalty_applies_after_goal():
    cfg = DrivingConfig(pit_enabled=True)
    env = DrivingGame(cfg)
    state = _drive_state(pos0=(-0.3, 0.0), heading0=0.0, speed0=0.0, reached0=True)
    _, (r0, _), _ = env.step(state, (0, 0))
    assert r0 == pytest.approx(-cfg.c_pit)


def test_drive_pit_needs_enable_flag():
    env = DrivingGame(DrivingConfig(pit_enabled=False))
    state = _drive_state(pos0=(-0.3, 0.0), heading0=0.0, speed0=0.0)
    _, (r0, _), _ = env.step(state, (0, 0))
    assert r0 == pytest.approx(-0.1)  # no pit penalty when disabled


def test_drive_kinematics_turn_and_speed_cap():
    cfg = DrivingConfig()
    env = DrivingGame(cfg)
    state = _drive_state(heading0=0.0)
    state, _, _ = env.step(state, (0, 1))  # agent 0 cw, agent 1 ccw
    assert state.headings[0] == pytest.approx(2 * math.pi - math.pi / 8)
    for _ in range(25):
        state, _, _ = env.step(state, (2, 2))
    assert state.speeds[0] == pytest.approx(cfg.speed_cap)


def test_drive_arena_clamp():
    cfg = DrivingConfig()
    env = DrivingGame(cfg)
    state = _drive_state(pos0=(4.9, 0.0), heading0=0.0, speed0=3.0)
    state, _, _ = env.step(state, (2, 0))
    assert state.positions[0][0] == cfg.arena_half


def test_drive_observe_layout():
    cfg = DrivingConfig()
    env = DrivingGame(cfg)
    state = env.reset(4)
    obs0, obs1 = env.observe_all(state)
    assert obs0.dim == 22 == cfg.obs_dim
    # private part: one-hot of the OTHER agent's goal
    assert obs0.private_part.shape == (8,)
    assert obs0.private_part.argmax() == state.goal_slots[1]
    assert obs1.private_part.argmax() == state.goal_slots[0]
    assert obs0.private_part.sum() == 1.0
    # global part leads with self: agent 0 spawns at (-4.5, 0)
    assert obs0.global_part[0] == pytest.approx(-0.9)
    assert obs1.global_part[0] == pytest.approx(0.9)


def test_drive_identical_pose_symmetric_globals():
    state = DrivingState(
        positions=((1.0, 1.0), (1.0, 1.0)),
        prev_positions=((0.5, 1.0), (0.5, 1.0)),
        headings=(0.3, 0.3),
        speeds=(1.0, 1.0),
        goal_slots=(2, 6),
        min_goal_distance=(5.0, 5.0),
        reached=(False, False),
        t=1,
    )
    env = DrivingGame(DrivingConfig())
    obs0, obs1 = env.observe_all(state)
    assert np.array_equal(obs0.global_part, obs1.global_part)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_drive_invariants_random_play(seed):
    cfg = DrivingConfig(pit_enabled=True)
    env = DrivingGame(cfg)
    rng = np.random.default_rng(seed)
    state = env.reset(seed)
    done, steps = False, 0
    prev_min = state.min_goal_distance
    while not done and steps < 60:
        state, _, done = env.step(state, rng.integers(0, 3, 2))
        steps += 1
        for i in range(2):
            assert state.min_goal_distance[i] <= prev_min[i] + 1e-12
            assert 0.0 <= state.headings[i] < 2 * math.pi
            assert 0.0 <= state.speeds[i] <= cfg.speed_cap
            assert abs(state.positions[i][0]) <= cfg.arena_half
            assert abs(state.positions[i][1]) <= cfg.arena_half
        prev_min = state.min_goal_distance


# ---------------------------------------------------------------------------
# Scalar vs batch equivalence (the batch envs power training; the scalar
# envs are the readable reference)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n_agents", [2, 3])
def test_gridworld_batch_matches_scalar(n_agents):
    cfg = GridworldConfig(n_agents=n_agents)
    n_envs, base = 5, 100
    batch = GridworldBatch(cfg, n_envs=n_envs, base_seed=base, auto_reset=False)
    scalar = Gridworld(cfg)
    states = [scalar.reset(base + b) for b in range(n_envs)]
    done = [False] * n_envs
    rng = np.random.default_rng(0)

    for t in range(10):
        np.testing.assert_array_equal(
            batch.observe(),
            np.stack(
                [np.stack([o.full for o in scalar.observe_all(s)]) for s in states]
            ),
        )
        actions = rng.integers(0, 5, (n_envs, n_agents))
        rewards, _ = batch.step(actions)
        for b in range(n_envs):
            if done[b]:
                assert rewards[b] == 0.0
                continue
            states[b], r, done[b] = scalar.step(states[b], actions[b])
            assert rewards[b] == r
            assert tuple(map(tuple, batch.positions[b].tolist())) == states[b].positions
            assert tuple(batch.reached[b].tolist()) == states[b].reached
    assert all(done) == all(batch.done)


def test_driving_batch_matches_scalar():
    cfg = DrivingConfig(pit_enabled=True)
    n_envs, base = 4, 50
    batch = DrivingBatch(cfg, n_envs=n_envs, base_seed=base, auto_reset=False)
    scalar = DrivingGame(cfg)
    states = [scalar.reset(base + b) for b in range(n_envs)]
    done = [False] * n_envs
    rng = np.random.default_rng(1)

    for t in range(80):
        batch_obs = batch.observe()
        for b in range(n_envs):
            if done[b]:
                continue
            scal_obs = np.stack([o.full for o in scalar.observe_all(states[b])])
            np.testing.assert_allclose(batch_obs[b], scal_obs, atol=1e-6)
        actions = rng.integers(0, 3, (n_envs, 2))
        rewards, _ = batch.step(actions)
        for b in range(n_envs):
            if done[b]:
                assert np.all(rewards[b] == 0.0)
                continue
            states[b], r, done[b] = scalar.step(states[b], actions[b])
            np.testing.assert_allclose(rewards[b], r, atol=1e-9)
            np.testing.assert_allclose(
                batch.positions[b], np.array(states[b].positions), atol=1e-12
            )
            np.testing.assert_allclose(
                batch.min_d[b], np.array(states[b].min_goal_distance), atol=1e-12
            )


def test_batch_auto_reset_assigns_fresh_seeds():
    cfg = GridworldConfig(n_agents=2)
    batch = GridworldBatch(cfg, n_envs=3, base_seed=0, auto_reset=True)
    seeds0 = batch.env_seeds.copy()
    assert seeds0.tolist() == [0, 1, 2]
    for _ in range(10):  # horizon is 10: every env finishes at least once
        batch.step(np.full((3, 2), 4))
    assert batch.env_seeds.min() >= 3
    assert not batch.done.any()  # auto-reset leaves no env in a done state


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def test_gridworld_config_from_mapping():
    cfg = gridworld_config_from_mapping({"n_agents": "3"})
    assert cfg.n_agents == 3 and cfg.horizon == 10
    with pytest.raises(ValueError):
        gridworld_config_from_mapping({"n_agents": "4"})


def test_driving_config_from_mapping():
    cfg = driving_config_from_mapping(
        {
            "pit_enabled": "true",
            "pit_radius": "2.0",
            "c_pit": "5.0",
            "pit_center": "0.5,0.5",
            "spawns": "-4,0,0;4,0,3.141592653589793",
        }
    )
    assert cfg.pit_enabled and cfg.pit_radius == 2.0 and cfg.c_pit == 5.0
    assert cfg.pit_center == (0.5, 0.5)
    assert cfg.spawns[0] == (-4.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        driving_config_from_mapping({"pit_enabled": "maybe"})


def test_driving_config_validation():
    with pytest.raises(ValueError):
        DrivingConfig(goal_slots=((0.0, 0.0),) * 7)
    with pytest.raises(ValueError):
        DrivingConfig(dt=-0.1)
