"""Goal-seeking gridworld for communicating teams.

Each agent must reach its own goal square but only observes a 3x3 proximity
window around itself, plus a noisy "close guess" of the *next* agent's goal
(within one tile of the truth). Positions of everyone are public. The team
is rewarded jointly, so telling your neighbour where its goal is pays off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ObservationSplit

# action index -> (dx, dy); moves clamp at the walls
GRID_ACTIONS = ((0, 1), (0, -1), (-1, 0), (1, 0), (0, 0))
GRID_ACTION_NAMES = ("up", "down", "left", "right", "stay")
N_GRID_ACTIONS = 5

GRID_PRIVATE_DIM = 9 + 5 + 5  # proximity window + close-guess one-hots


@dataclass(frozen=True)
class GridworldConfig:
    width: int = 5
    height: int = 5
    n_agents: int = 2
    horizon: int = 10

    def __post_init__(self):
        if self.width != 5 or self.height != 5:
            raise ValueError("grid size is fixed at 5x5")
        if self.n_agents not in (2, 3):
            raise ValueError(f"n_agents must be 2 or 3, got {self.n_agents}")
        if self.horizon != 10:
            raise ValueError("horizon is fixed at 10")

    @property
    def obs_dim(self) -> int:
        return GRID_PRIVATE_DIM + 10 * self.n_agents


@dataclass(frozen=True)
class GridworldState:
    positions: tuple[tuple[int, int], ...]
    goals: tuple[tuple[int, int], ...]
    # close_guesses[i] is agent i's guess of agent (i+1 mod N)'s goal
    close_guesses: tuple[tuple[int, int], ...]
    reached: tuple[bool, ...]
    t: int


def _sample_grid_reset(rng: np.random.Generator, n_agents: int):
    """Draw (positions, goals, guesses) in a pinned order so scalar and
    batched resets agree for the same seed."""
    positions = rng.integers(0, 5, size=(n_agents, 2))
    goals = rng.integers(0, 5, size=(n_agents, 2))
    guesses = np.empty((n_agents, 2), dtype=np.int64)
    for i in range(n_agents):
        gx, gy = goals[(i + 1) % n_agents]
        cells = [
            (gx + dx, gy + dy)
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            if 0 <= gx + dx < 5 and 0 <= gy + dy < 5
        ]
        guesses[i] = cells[rng.integers(0, len(cells))]
    return positions, goals, guesses


class Gridworld:
    """Single-episode functional stepper: methods take and return states."""

    def __init__(self, config: GridworldConfig | None = None):
        self.config = config or GridworldConfig()

    @property
    def n_actions(self) -> int:
        return N_GRID_ACTIONS

    @property
    def private_dim(self) -> int:
        return GRID_PRIVATE_DIM

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    def reset(self, seed: int) -> GridworldState:
        rng = np.random.default_rng(seed)
        positions, goals, guesses = _sample_grid_reset(rng, self.config.n_agents)
        n = self.config.n_agents
        return GridworldState(
            positions=tuple(map(tuple, positions.tolist())),
            goals=tuple(map(tuple, goals.tolist())),
            close_guesses=tuple(map(tuple, guesses.tolist())),
            reached=(False,) * n,
            t=0,
        )

    def step(
        self, state: GridworldState, actions: tuple[int, ...] | list[int]
    ) -> tuple[GridworldState, float, bool]:
        cfg = self.config
        if len(actions) != cfg.n_agents:
            raise ValueError(f"need {cfg.n_agents} actions, got {len(actions)}")
        new_positions = []
        new_reached = []
        reward = 0.0
        for i, a in enumerate(actions):
            a = int(a)
            if not 0 <= a < N_GRID_ACTIONS:
                raise ValueError(f"invalid action {a} for agent {i}")
            if state.reached[i]:
                # finished agents park on their goal and earn nothing
                new_positions.append(state.positions[i])
                new_reached.append(True)
                continue
            dx, dy = GRID_ACTIONS[a]
            x = min(max(state.positions[i][0] + dx, 0), cfg.width - 1)
            y = min(max(state.positions[i][1] + dy, 0), cfg.height - 1)
            new_positions.append((x, y))
            if (x, y) == state.goals[i]:
                reward += 1.0
                new_reached.append(True)
            else:
                reward -= 1.0
                new_reached.append(False)
        t = state.t + 1
        next_state = GridworldState(
            positions=tuple(new_positions),
            goals=state.goals,
            close_guesses=state.close_guesses,
            reached=tuple(new_reached),
            t=t,
        )
        done = all(new_reached) or t >= cfg.horizon
        return next_state, reward, done

    def observe(self, state: GridworldState, agent: int) -> ObservationSplit:
        cfg = self.config
        if not 0 <= agent < cfg.n_agents:
            raise ValueError(f"invalid agent index {agent}")
        px, py = state.positions[agent]
        gx, gy = state.goals[agent]

        proximity = np.zeros(9, dtype=np.float32)
        dx, dy = gx - px, gy - py
        if abs(dx) <= 1 and abs(dy) <= 1:
            proximity[(dy + 1) * 3 + (dx + 1)] = 1.0

        qx, qy = state.close_guesses[agent]
        guess = np.zeros(10, dtype=np.float32)
        guess[qx] = 1.0
        guess[5 + qy] = 1.0

        n = cfg.n_agents
        pos = np.zeros(10 * n, dtype=np.float32)
        for j in range(n):
            ox, oy = state.positions[(agent + j) % n]
            pos[10 * j + ox] = 1.0
            pos[10 * j + 5 + oy] = 1.0

        return ObservationSplit(np.concatenate([proximity, guess]), pos)

    def observe_all(self, state: GridworldState) -> tuple[ObservationSplit, ...]:
        return tuple(self.observe(state, i) for i in range(self.config.n_agents))


class GridworldBatch:
    """Vectorized copy of the dynamics over `n_envs` parallel episodes.

    Seeds are assigned sequentially from `base_seed`; with `auto_reset` a
    finished episode restarts on the next step() using the next seed.
    """

    def __init__(
        self,
        config: GridworldConfig,
        n_envs: int,
        base_seed: int = 0,
        auto_reset: bool = True,
    ):
        self.config = config
        self.n_envs = n_envs
        self.auto_reset = auto_reset
        self._next_seed = base_seed
        n = config.n_agents
        self.positions = np.zeros((n_envs, n, 2), dtype=np.int64)
        self.goals = np.zeros((n_envs, n, 2), dtype=np.int64)
        self.guesses = np.zeros((n_envs, n, 2), dtype=np.int64)
        self.reached = np.zeros((n_envs, n), dtype=bool)
        self.t = np.zeros(n_envs, dtype=np.int64)
        self.done = np.zeros(n_envs, dtype=bool)
        self.env_seeds = np.zeros(n_envs, dtype=np.int64)
        for b in range(n_envs):
            self._reset_env(b)

    def _reset_env(self, b: int) -> None:
        seed = self._next_seed
        self._next_seed += 1
        rng = np.random.default_rng(seed)
        pos, goals, guesses = _sample_grid_reset(rng, self.config.n_agents)
        self.positions[b] = pos
        self.goals[b] = goals
        self.guesses[b] = guesses
        self.reached[b] = False
        self.t[b] = 0
        self.done[b] = False
        self.env_seeds[b] = seed

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """actions: (n_envs, n_agents) ints. Returns (team_reward, done_now),
        both (n_envs,). Finished envs (auto_reset off) are frozen no-ops."""
        cfg = self.config
        actions = np.asarray(actions)
        if actions.shape != (self.n_envs, cfg.n_agents):
            raise ValueError(f"actions shape {actions.shape} invalid")
        if actions.min() < 0 or actions.max() >= N_GRID_ACTIONS:
            raise ValueError("invalid action index in batch")

        live = ~self.done
        moving = live[:, None] & ~self.reached
        deltas = np.array(GRID_ACTIONS, dtype=np.int64)[actions]
        new_pos = np.clip(self.positions + deltas * moving[..., None], 0, 4)
        at_goal = np.all(new_pos == self.goals, axis=-1)
        newly = moving & at_goal
        reward = (
            newly.astype(np.float64) - (moving & ~at_goal).astype(np.float64)
        ).sum(axis=1)

        self.positions = new_pos
        self.reached |= newly
        self.t[live] += 1
        done_now = live & (np.all(self.reached, axis=1) | (self.t >= cfg.horizon))
        self.done |= done_now
        reward[~live] = 0.0

        if self.auto_reset:
            for b in np.flatnonzero(done_now):
                self._reset_env(b)
        return reward, done_now

    def observe(self) -> np.ndarray:
        """(n_envs, n_agents, obs_dim) observations, private part first."""
        cfg = self.config
        n, b = cfg.n_agents, self.n_envs
        obs = np.zeros((b, n, cfg.obs_dim), dtype=np.float32)

        diff = self.goals - self.positions  # (b, n, 2)
        within = (np.abs(diff) <= 1).all(axis=-1)
        k = (diff[..., 1] + 1) * 3 + (diff[..., 0] + 1)
        be, ag = np.nonzero(within)
        obs[be, ag, k[be, ag]] = 1.0

        rows = np.arange(b)[:, None]
        agents = np.arange(n)[None, :]
        obs[rows, agents, 9 + self.guesses[..., 0]] = 1.0
        obs[rows, agents, 14 + self.guesses[..., 1]] = 1.0

        pos_hot = np.zeros((b, n, 10), dtype=np.float32)
        pos_hot[rows, agents, self.positions[..., 0]] = 1.0
        pos_hot[rows, agents, 5 + self.positions[..., 1]] = 1.0
        for i in range(n):
            order = (i + np.arange(n)) % n
            obs[:, i, GRID_PRIVATE_DIM:] = pos_hot[:, order, :].reshape(b, 10 * n)
        return obs
