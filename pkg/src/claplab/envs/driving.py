"""Two-car driving game with private goals.

Each car is told the *other* car's goal slot, so reaching your own goal
requires listening to your partner. Progress toward the goal is rewarded
through the decrease of the running minimum goal distance; an optional pit
in the middle of the arena punishes careless straight-line driving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import ObservationSplit

DRIVE_ACTION_NAMES = ("turn_cw", "turn_ccw", "accelerate")
N_DRIVE_ACTIONS = 3
N_GOAL_SLOTS = 8
TWO_PI = 2.0 * math.pi


def _wrap_angle(h: float) -> float:
    h = h % TWO_PI
    return 0.0 if h >= TWO_PI else h  # x % 2pi can round up to exactly 2pi


def _default_goal_slots() -> tuple[tuple[float, float], ...]:
    return tuple(
        (4.0 * math.cos(k * math.pi / 4.0), 4.0 * math.sin(k * math.pi / 4.0))
        for k in range(N_GOAL_SLOTS)
    )


@dataclass(frozen=True)
class DrivingConfig:
    pit_enabled: bool = False
    pit_center: tuple[float, float] = (0.0, 0.0)
    pit_radius: float = 1.25
    goal_slots: tuple[tuple[float, float], ...] = field(default_factory=_default_goal_slots)
    turn_angle: float = math.pi / 8.0
    accel: float = 1.0
    dt: float = 0.2
    horizon: int = 200
    alpha: float = 200.0
    c_time: float = 0.1
    r_goal: float = 500.0
    c_pit: float = 10.0
    arena_half: float = 5.0
    reach_threshold: float = 0.5
    speed_cap: float = 3.0
    # (x, y, heading) per agent
    spawns: tuple[tuple[float, float, float], ...] = (
        (-4.5, 0.0, 0.0),
        (4.5, 0.0, math.pi),
    )

    def __post_init__(self):
        if len(self.goal_slots) != N_GOAL_SLOTS:
            raise ValueError(f"exactly {N_GOAL_SLOTS} goal slots required")
        if len(self.spawns) != 2:
            raise ValueError("this game is for exactly 2 agents")
        for name in ("pit_radius", "turn_angle", "accel", "dt", "alpha",
                     "c_time", "r_goal", "c_pit", "arena_half",
                     "reach_threshold", "speed_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def n_agents(self) -> int:
        return 2

    @property
    def obs_dim(self) -> int:
        return N_GOAL_SLOTS + 7 * self.n_agents


@dataclass(frozen=True)
class DrivingState:
    positions: tuple[tuple[float, float], ...]
    prev_positions: tuple[tuple[float, float], ...]
    headings: tuple[float, ...]  # wrapped to [0, 2pi)
    speeds: tuple[float, ...]
    goal_slots: tuple[int, ...]
    min_goal_distance: tuple[float, ...]
    reached: tuple[bool, ...]
    t: int


class DrivingGame:
    def __init__(self, config: DrivingConfig | None = None):
        self.config = config or DrivingConfig()

    @property
    def n_actions(self) -> int:
        return N_DRIVE_ACTIONS

    @property
    def private_dim(self) -> int:
        return N_GOAL_SLOTS

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    def reset(self, seed: int) -> DrivingState:
        cfg = self.config
        rng = np.random.default_rng(seed)
        slots = tuple(int(s) for s in rng.integers(0, N_GOAL_SLOTS, size=2))
        positions = tuple((x, y) for x, y, _ in cfg.spawns)
        headings = tuple(_wrap_angle(h) for _, _, h in cfg.spawns)
        min_d = tuple(
            math.dist(positions[i], cfg.goal_slots[slots[i]]) for i in range(2)
        )
        return DrivingState(
            positions=positions,
            prev_positions=positions,
            headings=headings,
            speeds=(0.0, 0.0),
            goal_slots=slots,
            min_goal_distance=min_d,
            reached=(False, False),
            t=0,
        )

    def step(
        self, state: DrivingState, actions: tuple[int, ...] | list[int]
    ) -> tuple[DrivingState, tuple[float, float], bool]:
        cfg = self.config
        if len(actions) != 2:
            raise ValueError(f"need 2 actions, got {len(actions)}")
        positions, headings, speeds = [], [], []
        min_d, reached, rewards = [], [], []
        for i, a in enumerate(actions):
            a = int(a)
            # -1 = coast: no control input (interactive sessions record it
            # when no key is held); the car keeps its heading and speed
            if not -1 <= a < N_DRIVE_ACTIONS:
                raise ValueError(f"invalid action {a} for agent {i}")
            h, v = state.headings[i], state.speeds[i]
            if a == 0:
                h = _wrap_angle(h - cfg.turn_angle)
            elif a == 1:
                h = _wrap_angle(h + cfg.turn_angle)
            elif a == 2:
                v = min(v + cfg.accel * cfg.dt, cfg.speed_cap)
            x = state.positions[i][0] + v * math.cos(h) * cfg.dt
            y = state.positions[i][1] + v * math.sin(h) * cfg.dt
            x = min(max(x, -cfg.arena_half), cfg.arena_half)
            y = min(max(y, -cfg.arena_half), cfg.arena_half)

            in_pit = (
                cfg.pit_enabled
                and math.dist((x, y), cfg.pit_center) < cfg.pit_radius
            )
            d = math.dist((x, y), cfg.goal_slots[state.goal_slots[i]])
            progress = max(0.0, state.min_goal_distance[i] - d)
            new_min = min(state.min_goal_distance[i], d)

            if state.reached[i]:
                r = -cfg.c_pit if in_pit else 0.0
                hit = True
            else:
                hit = d < cfg.reach_threshold
                r = -cfg.c_time
                if in_pit:
                    r -= cfg.c_pit
                else:
                    r += cfg.alpha * progress
                if hit:
                    r += cfg.r_goal
            positions.append((x, y))
            headings.append(h)
            speeds.append(v)
            min_d.append(new_min)
            reached.append(hit)
            rewards.append(r)

        t = state.t + 1
        next_state = DrivingState(
            positions=tuple(positions),
            prev_positions=state.positions,
            headings=tuple(headings),
            speeds=tuple(speeds),
            goal_slots=state.goal_slots,
            min_goal_distance=tuple(min_d),
            reached=tuple(reached),
            t=t,
        )
        done = all(reached) or t >= cfg.horizon
        return next_state, (rewards[0], rewards[1]), done

    def observe(self, state: DrivingState, agent: int) -> ObservationSplit:
        cfg = self.config
        if agent not in (0, 1):
            raise ValueError(f"invalid agent index {agent}")
        private = np.zeros(N_GOAL_SLOTS, dtype=np.float32)
        private[state.goal_slots[1 - agent]] = 1.0
        parts = []
        for j in (agent, 1 - agent):
            x, y = state.positions[j]
            px, py = state.prev_positions[j]
            h, v = state.headings[j], state.speeds[j]
            parts.extend(
                [
                    x / cfg.arena_half,
                    y / cfg.arena_half,
                    px / cfg.arena_half,
                    py / cfg.arena_half,
                    math.cos(h),
                    math.sin(h),
                    v / cfg.speed_cap,
                ]
            )
        return ObservationSplit(private, np.array(parts, dtype=np.float32))

    def observe_all(self, state: DrivingState) -> tuple[ObservationSplit, ...]:
        return self.observe(state, 0), self.observe(state, 1)


class DrivingBatch:
    """Vectorized driving dynamics over parallel episodes (see GridworldBatch)."""

    def __init__(
        self,
        config: DrivingConfig,
        n_envs: int,
        base_seed: int = 0,
        auto_reset: bool = True,
    ):
        self.config = config
        self.n_envs = n_envs
        self.auto_reset = auto_reset
        self._next_seed = base_seed
        self.goal_xy = np.array(config.goal_slots, dtype=np.float64)
        self.spawn_xy = np.array([(x, y) for x, y, _ in config.spawns])
        self.spawn_h = np.array([_wrap_angle(h) for _, _, h in config.spawns])

        self.positions = np.zeros((n_envs, 2, 2), dtype=np.float64)
        self.prev_positions = np.zeros((n_envs, 2, 2), dtype=np.float64)
        self.headings = np.zeros((n_envs, 2), dtype=np.float64)
        self.speeds = np.zeros((n_envs, 2), dtype=np.float64)
        self.slots = np.zeros((n_envs, 2), dtype=np.int64)
        self.min_d = np.zeros((n_envs, 2), dtype=np.float64)
        self.reached = np.zeros((n_envs, 2), dtype=bool)
        self.t = np.zeros(n_envs, dtype=np.int64)
        self.done = np.zeros(n_envs, dtype=bool)
        self.env_seeds = np.zeros(n_envs, dtype=np.int64)
        for b in range(n_envs):
            self._reset_env(b)

    def _reset_env(self, b: int) -> None:
        seed = self._next_seed
        self._next_seed += 1
        rng = np.random.default_rng(seed)
        self.slots[b] = rng.integers(0, N_GOAL_SLOTS, size=2)
        self.positions[b] = self.spawn_xy
        self.prev_positions[b] = self.spawn_xy
        self.headings[b] = self.spawn_h
        self.speeds[b] = 0.0
        self.min_d[b] = np.linalg.norm(
            self.spawn_xy - self.goal_xy[self.slots[b]], axis=-1
        )
        self.reached[b] = False
        self.t[b] = 0
        self.done[b] = False
        self.env_seeds[b] = seed

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """actions: (n_envs, 2). Returns (per_agent_rewards (n_envs, 2),
        done_now (n_envs,))."""
        cfg = self.config
        actions = np.asarray(actions)
        if actions.shape != (self.n_envs, 2):
            raise ValueError(f"actions shape {actions.shape} invalid")
        if actions.min() < 0 or actions.max() >= N_DRIVE_ACTIONS:
            raise ValueError("invalid action index in batch")

        live = ~self.done
        was_reached = self.reached.copy()

        turn = np.where(actions == 0, -cfg.turn_angle, 0.0) + np.where(
            actions == 1, cfg.turn_angle, 0.0
        )
        turn[~live] = 0.0
        self.headings = (self.headings + turn) % TWO_PI
        self.headings[self.headings >= TWO_PI] = 0.0
        accel = (actions == 2) & live[:, None]
        self.speeds = np.minimum(
            self.speeds + accel * cfg.accel * cfg.dt, cfg.speed_cap
        )

        vel = self.speeds[..., None] * np.stack(
            [np.cos(self.headings), np.sin(self.headings)], axis=-1
        )
        new_pos = np.clip(
            self.positions + vel * cfg.dt * live[:, None, None],
            -cfg.arena_half,
            cfg.arena_half,
        )
        self.prev_positions = np.where(
            live[:, None, None], self.positions, self.prev_positions
        )
        self.positions = new_pos

        in_pit = np.zeros((self.n_envs, 2), dtype=bool)
        if cfg.pit_enabled:
            pit = np.asarray(cfg.pit_center, dtype=np.float64)
            in_pit = (
                np.linalg.norm(self.positions - pit, axis=-1) < cfg.pit_radius
            )
        d = np.linalg.norm(
            self.positions - self.goal_xy[self.slots], axis=-1
        )
        progress = np.maximum(0.0, self.min_d - d)
        self.min_d = np.where(live[:, None], np.minimum(self.min_d, d), self.min_d)

        hit = ~was_reached & (d < cfg.reach_threshold) & live[:, None]
        pre_goal = ~was_reached & live[:, None]
        rewards = np.where(
            pre_goal,
            -cfg.c_time
            + np.where(in_pit, -cfg.c_pit, cfg.alpha * progress)
            + cfg.r_goal * hit,
            np.where(was_reached & live[:, None] & in_pit, -cfg.c_pit, 0.0),
        )
        self.reached |= hit
        self.t[live] += 1
        done_now = live & (np.all(self.reached, axis=1) | (self.t >= cfg.horizon))
        self.done |= done_now

        if self.auto_reset:
            for b in np.flatnonzero(done_now):
                self._reset_env(b)
        return rewards, done_now

    def observe(self) -> np.ndarray:
        """(n_envs, 2, obs_dim) observations, private goal one-hot first."""
        cfg = self.config
        b = self.n_envs
        obs = np.zeros((b, 2, cfg.obs_dim), dtype=np.float32)
        rows = np.arange(b)
        # private part: the other agent's goal slot
        obs[rows, 0, self.slots[:, 1]] = 1.0
        obs[rows, 1, self.slots[:, 0]] = 1.0

        feats = np.concatenate(
            [
                self.positions / cfg.arena_half,
                self.prev_positions / cfg.arena_half,
                np.cos(self.headings)[..., None],
                np.sin(self.headings)[..., None],
                (self.speeds / cfg.speed_cap)[..., None],
            ],
            axis=-1,
        ).astype(np.float32)  # (b, 2, 7)
        obs[:, 0, N_GOAL_SLOTS:] = feats.reshape(b, 14)
        obs[:, 1, N_GOAL_SLOTS:] = feats[:, ::-1, :].reshape(b, 14)
        return obs
