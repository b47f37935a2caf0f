"""Team composition and batched episode rollout in evaluation mode.

A team is a list of members implementing the `TeamMember` protocol; the
runner advances many episodes in lockstep, routing discrete symbols along
the channel topology each step. All members act greedily (argmax), so a
team's behaviour is a deterministic function of the env seeds (random
members excepted, which draw from their own seeded stream).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .core import (
    ChannelTopology,
    EpisodeLog,
    EpisodeStep,
    ObservationSplit,
    one_hot,
)
from .envs import DrivingConfig, GridworldConfig
from .mappo.nets import PolicyNet
from .mappo.trainer import make_env_batch
from .ndiff import ParamStore


class TeamMember(Protocol):
    """Batched eval-mode agent interface."""

    def speak(self, obs: np.ndarray) -> np.ndarray:
        """obs (B, D) -> outgoing symbols (B,) int."""
        ...

    def act(self, obs: np.ndarray, incoming: np.ndarray) -> np.ndarray:
        """obs (B, D), incoming one-hot block (B, K * in_degree) -> (B,) int."""
        ...


@dataclass
class CommunityMember:
    """A trained community policy in eval mode (discretized messages,
    greedy actions). With `blind_private`, the action pass sees a zeroed
    private part while the speaking pass is untouched."""

    policy: PolicyNet
    store: ParamStore
    private_dim: int = 0
    blind_private: bool = False

    def speak(self, obs: np.ndarray) -> np.ndarray:
        return self.policy.comm_logits_np(self.store, obs).argmax(axis=-1)

    def act(self, obs: np.ndarray, incoming: np.ndarray) -> np.ndarray:
        if self.blind_private:
            obs = obs.copy()
            obs[:, : self.private_dim] = 0.0
        return self.policy.action_logits_np(self.store, obs, incoming).argmax(axis=-1)

    def act_probs(self, obs: np.ndarray, incoming: np.ndarray) -> np.ndarray:
        """Softmax action distribution, (B, A)."""
        if self.blind_private:
            obs = obs.copy()
            obs[:, : self.private_dim] = 0.0
        logits = self.policy.action_logits_np(self.store, obs, incoming)
        z = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)


@dataclass
class RandomMember:
    """Uniform random symbols and actions from a private seeded stream."""

    n_actions: int
    alphabet: int
    seed: int = 0

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def speak(self, obs: np.ndarray) -> np.ndarray:
        return self._rng.integers(0, self.alphabet, size=len(obs))

    def act(self, obs: np.ndarray, incoming: np.ndarray) -> np.ndarray:
        return self._rng.integers(0, self.n_actions, size=len(obs))


@dataclass
class TeamEvalResult:
    rewards: np.ndarray              # (n_episodes,) total team reward
    env_seeds: np.ndarray            # (n_episodes,)
    logs: list[EpisodeLog] | None    # per-episode logs when recorded


def _private_dim(env_cfg) -> int:
    if isinstance(env_cfg, GridworldConfig):
        return 19
    if isinstance(env_cfg, DrivingConfig):
        return 8
    raise TypeError(f"unsupported env config {type(env_cfg).__name__}")


def run_team_episodes(
    env_cfg,
    members: Sequence[TeamMember],
    topology: ChannelTopology,
    alphabet: int,
    n_episodes: int,
    base_seed: int,
    block_comm: bool = False,
    record: bool = False,
    chunk_size: int = 512,
) -> TeamEvalResult:
    """Run `n_episodes` evaluation episodes with env seeds
    base_seed .. base_seed + n_episodes - 1.

    `block_comm` replaces every delivered message with the constant symbol
    0 (members still speak; logs record what was delivered). Episodes are
    processed in chunks to bound memory.
    """
    n = topology.n_agents
    if len(members) != n:
        raise ValueError(f"need {n} members, got {len(members)}")
    pdim = _private_dim(env_cfg)

    all_rewards = np.zeros(n_episodes)
    all_seeds = np.zeros(n_episodes, dtype=np.int64)
    all_logs: list[EpisodeLog] | None = [] if record else None

    for chunk_start in range(0, n_episodes, chunk_size):
        m = min(chunk_size, n_episodes - chunk_start)
        env = make_env_batch(
            env_cfg, m, base_seed=base_seed + chunk_start, auto_reset=False
        )
        all_seeds[chunk_start : chunk_start + m] = env.env_seeds
        totals = np.zeros(m)
        steps: list[list[EpisodeStep]] = [[] for _ in range(m)]

        for _ in range(env_cfg.horizon):
            live = ~env.done
            if not live.any():
                break
            obs3 = env.observe()  # (m, n, D)
            symbols = np.stack(
                [members[i].speak(obs3[:, i, :]) for i in range(n)], axis=1
            )
            delivered = np.zeros_like(symbols) if block_comm else symbols

            actions = np.empty((m, n), dtype=np.int64)
            for r in range(n):
                senders = topology.senders_to(r)
                incoming = np.concatenate(
                    [one_hot(delivered[:, s], alphabet) for s in senders], axis=-1
                )
                actions[:, r] = members[r].act(obs3[:, r, :], incoming)

            rewards, _ = env.step(actions)
            team = rewards if rewards.ndim == 1 else rewards.sum(axis=1)
            totals += team

            if record:
                edge_syms = [delivered[:, s] for s, _ in topology.edges]
                for b in np.flatnonzero(live):
                    steps[b].append(
                        EpisodeStep(
                            observations=tuple(
                                ObservationSplit.from_full(obs3[b, i], pdim)
                                for i in range(n)
                            ),
                            edge_messages=tuple(
                                int(es[b]) for es in edge_syms
                            ),
                            actions=tuple(int(a) for a in actions[b]),
                            reward=float(team[b]),
                        )
                    )

        all_rewards[chunk_start : chunk_start + m] = totals
        if record:
            all_logs.extend(
                EpisodeLog(
                    seed=int(env.env_seeds[b]), topology=topology,
                    steps=tuple(steps[b]),
                )
                for b in range(m)
            )

    return TeamEvalResult(rewards=all_rewards, env_seeds=all_seeds, logs=all_logs)
