"""Data model for communicating-team interactions: observations, messages,
episode logs, interaction datasets, and the discrete message channel.

Everything here is immutable after construction and safe to share across
threads; the operations are pure functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

INTERACTIONS_SCHEMA = "clap-interactions-v1"
EPISODES_SCHEMA = "clap-episodes-v1"

# Sentinel for "no key held" in raw human rows.
NO_ACTION = -1


class SchemaError(ValueError):
    """A dataset or checkpoint file does not match its declared schema."""


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ObservationSplit:
    """A per-agent observation partitioned into a private part (seen only by
    this agent) and a global part (shared scene information)."""

    private_part: np.ndarray
    global_part: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "private_part", _frozen(self.private_part))
        object.__setattr__(self, "global_part", _frozen(self.global_part))

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.private_part, self.global_part])

    @property
    def dim(self) -> int:
        return self.private_part.shape[0] + self.global_part.shape[0]

    def with_private_zeroed(self) -> "ObservationSplit":
        return ObservationSplit(np.zeros_like(self.private_part), self.global_part)

    @staticmethod
    def from_full(vec: np.ndarray, private_dim: int) -> "ObservationSplit":
        vec = np.asarray(vec)
        return ObservationSplit(vec[:private_dim], vec[private_dim:])


@dataclass(frozen=True)
class InteractionRecord:
    """One observed communication event: the speaker's observation, the symbol
    it sent, and the receiver's observation and chosen environment action."""

    step: int
    speaker_id: int
    receiver_id: int
    speaker_obs: ObservationSplit
    message: int
    receiver_obs: ObservationSplit
    receiver_action: int
    episode: int = 0

    def __post_init__(self):
        if self.speaker_id == self.receiver_id:
            raise ValueError(
                f"speaker and receiver must differ (both {self.speaker_id})"
            )


@dataclass(frozen=True)
class ChannelTopology:
    """Directed one-way communication channels between agents."""

    n_agents: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set()
        for s, r in self.edges:
            if s == r:
                raise ValueError(f"self-edge ({s}, {r}) not allowed")
            if not (0 <= s < self.n_agents and 0 <= r < self.n_agents):
                raise ValueError(f"edge ({s}, {r}) outside agent range")
            if (s, r) in seen:
                raise ValueError(f"duplicate edge ({s}, {r})")
            seen.add((s, r))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))

    @staticmethod
    def ring(n_agents: int) -> "ChannelTopology":
        """Directed ring: agent i sends to agent (i+1) mod n."""
        if n_agents < 2:
            raise ValueError("a ring needs at least 2 agents")
        return ChannelTopology(
            n_agents, tuple((i, (i + 1) % n_agents) for i in range(n_agents))
        )

    def senders_to(self, agent: int) -> tuple[int, ...]:
        """Sender ids delivering to `agent`, sorted (message concat order)."""
        return tuple(sorted(s for s, r in self.edges if r == agent))

    def receivers_of(self, agent: int) -> tuple[int, ...]:
        return tuple(sorted(r for s, r in self.edges if s == agent))

    def edges_touching(self, agent: int) -> tuple[tuple[int, int], ...]:
        return tuple(e for e in self.edges if agent in e)


@dataclass(frozen=True)
class EpisodeStep:
    observations: tuple[ObservationSplit, ...]
    edge_messages: tuple[int, ...]  # aligned with EpisodeLog.topology.edges
    actions: tuple[int, ...]
    reward: float


@dataclass(frozen=True)
class EpisodeLog:
    """Per-step record of one evaluation episode of a full team."""

    seed: int
    topology: ChannelTopology
    steps: tuple[EpisodeStep, ...] = field(default_factory=tuple)

    def messages_out(self, agent: int, t: int) -> tuple[int, ...]:
        return tuple(
            m
            for (s, _), m in zip(self.topology.edges, self.steps[t].edge_messages)
            if s == agent
        )

    def messages_in(self, agent: int, t: int) -> tuple[int, ...]:
        return tuple(
            m
            for (_, r), m in zip(self.topology.edges, self.steps[t].edge_messages)
            if r == agent
        )


def total_reward(log: EpisodeLog) -> float:
    """Sum of per-step team rewards over the episode (0 for an empty log)."""
    return float(sum(step.reward for step in log.steps))


def discretize_channel(soft_message: np.ndarray) -> int:
    """Collapse a simplex vector to its argmax symbol index.

    Ties break to the lowest index. Raises ValueError for inputs that are not
    on the probability simplex (entries >= 0, summing to 1 within 1e-6).
    """
    vec = np.asarray(soft_message, dtype=np.float64)
    if vec.ndim != 1 or vec.size < 2:
        raise ValueError(f"expected a 1-d simplex vector of size >= 2, got shape {vec.shape}")
    if np.any(vec < 0.0):
        raise ValueError("simplex vector has a negative entry")
    s = float(vec.sum())
    if abs(s - 1.0) > 1e-6:
        raise ValueError(f"simplex vector sums to {s!r}, not 1")
    return int(np.argmax(vec))


def one_hot(index: int | np.ndarray, size: int, dtype=np.float32) -> np.ndarray:
    """One-hot view of a symbol index (or a batch of them)."""
    idx = np.asarray(index)
    if np.any(idx < 0) or np.any(idx >= size):
        raise ValueError(f"index {index} outside [0, {size})")
    out = np.zeros(idx.shape + (size,), dtype=dtype)
    if idx.ndim == 0:
        out[int(idx)] = 1.0
    else:
        np.put_along_axis(out.reshape(-1, size), idx.reshape(-1, 1), 1.0, axis=1)
    return out


def split_interactions(
    data: Sequence[InteractionRecord], target_agent: int
) -> tuple[list[InteractionRecord], list[InteractionRecord]]:
    """Partition records into (signalling, listening) sets for one agent.

    Signalling records have the target as speaker, listening records have it
    as receiver. Every input record must involve the target in one role.
    """
    signalling: list[InteractionRecord] = []
    listening: list[InteractionRecord] = []
    for i, rec in enumerate(data):
        if rec.speaker_id == target_agent:
            signalling.append(rec)
        elif rec.receiver_id == target_agent:
            listening.append(rec)
        else:
            raise ValueError(
                f"record {i} involves agents ({rec.speaker_id}, {rec.receiver_id}), "
                f"not target agent {target_agent}"
            )
    return signalling, listening


# ---------------------------------------------------------------------------
# Interaction dataset files (line-delimited JSON, clap-interactions-v1)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionDataset:
    """A sequence of interaction records plus the header describing them."""

    records: tuple[InteractionRecord, ...]
    alphabet_size: int
    obs_dim: int
    private_dim: int
    env_name: str = ""
    n_agents: int = 0
    target_agent: int = -1

    def __post_init__(self):
        for i, rec in enumerate(self.records):
            if not (0 <= rec.message < self.alphabet_size):
                raise ValueError(
                    f"record {i} message {rec.message} outside alphabet "
                    f"[0, {self.alphabet_size})"
                )
            if rec.speaker_obs.dim != self.obs_dim or rec.receiver_obs.dim != self.obs_dim:
                raise ValueError(f"record {i} observation dims do not match header")

    def __len__(self) -> int:
        return len(self.records)

    def replace_records(self, records: Iterable[InteractionRecord]) -> "InteractionDataset":
        return InteractionDataset(
            tuple(records),
            self.alphabet_size,
            self.obs_dim,
            self.private_dim,
            self.env_name,
            self.n_agents,
            self.target_agent,
        )


def interaction_lines(dataset: InteractionDataset) -> Iterable[str]:
    """The dataset's canonical serialization, one JSON line at a time
    (header first). `write_interactions` and dataset fingerprints both
    consume this, so the hash of a written file equals the in-memory hash."""
    yield json.dumps(
        {
            "schema": INTERACTIONS_SCHEMA,
            "alphabet": dataset.alphabet_size,
            "obs_dim": dataset.obs_dim,
            "private_dim": dataset.private_dim,
            "env": dataset.env_name,
            "n_agents": dataset.n_agents,
            "target": dataset.target_agent,
        }
    )
    for rec in dataset.records:
        yield json.dumps(
            {
                "step": rec.step,
                "speaker": rec.speaker_id,
                "receiver": rec.receiver_id,
                "obs_s": rec.speaker_obs.full.astype(np.float64).tolist(),
                "msg": rec.message,
                "obs_r": rec.receiver_obs.full.astype(np.float64).tolist(),
                "act_r": rec.receiver_action,
                "ep": rec.episode,
            }
        )


def write_interactions(dataset: InteractionDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as f:
        for line in interaction_lines(dataset):
            f.write(line + "\n")


def read_interactions(path: str | Path) -> InteractionDataset:
    path = Path(path)
    with path.open() as f:
        try:
            header = json.loads(f.readline())
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: bad header line: {e}") from e
        if header.get("schema") != INTERACTIONS_SCHEMA:
            raise SchemaError(
                f"{path}: schema {header.get('schema')!r}, expected {INTERACTIONS_SCHEMA!r}"
            )
        pdim = int(header["private_dim"])
        records = []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}:{lineno}: bad record line: {e}") from e
            records.append(
                InteractionRecord(
                    step=int(row["step"]),
                    speaker_id=int(row["speaker"]),
                    receiver_id=int(row["receiver"]),
                    speaker_obs=ObservationSplit.from_full(
                        np.array(row["obs_s"], dtype=np.float32), pdim
                    ),
                    message=int(row["msg"]),
                    receiver_obs=ObservationSplit.from_full(
                        np.array(row["obs_r"], dtype=np.float32), pdim
                    ),
                    receiver_action=int(row["act_r"]),
                    episode=int(row.get("ep", 0)),
                )
            )
    return InteractionDataset(
        records=tuple(records),
        alphabet_size=int(header["alphabet"]),
        obs_dim=int(header["obs_dim"]),
        private_dim=pdim,
        env_name=str(header.get("env", "")),
        n_agents=int(header.get("n_agents", 0)),
        target_agent=int(header.get("target", -1)),
    )


# ---------------------------------------------------------------------------
# Episode log files (clap-episodes-v1)
# ---------------------------------------------------------------------------


def write_episode_logs(
    logs: Sequence[EpisodeLog], path: str | Path, private_dim: int
) -> None:
    if logs and any(log.topology != logs[0].topology for log in logs):
        raise ValueError("all episode logs in one file must share a topology")
    path = Path(path)
    topo = logs[0].topology if logs else ChannelTopology.ring(2)
    header = {
        "schema": EPISODES_SCHEMA,
        "n_agents": topo.n_agents,
        "edges": [list(e) for e in topo.edges],
        "private_dim": private_dim,
    }
    with path.open("w") as f:
        f.write(json.dumps(header) + "\n")
        for log in logs:
            row = {
                "seed": log.seed,
                "obs": [
                    [o.full.astype(np.float64).tolist() for o in st.observations]
                    for st in log.steps
                ],
                "msgs": [list(st.edge_messages) for st in log.steps],
                "acts": [list(st.actions) for st in log.steps],
                "rewards": [st.reward for st in log.steps],
            }
            f.write(json.dumps(row) + "\n")


def read_episode_logs(path: str | Path) -> list[EpisodeLog]:
    path = Path(path)
    with path.open() as f:
        header = json.loads(f.readline())
        if header.get("schema") != EPISODES_SCHEMA:
            raise SchemaError(
                f"{path}: schema {header.get('schema')!r}, expected {EPISODES_SCHEMA!r}"
            )
        topo = ChannelTopology(
            int(header["n_agents"]), tuple(tuple(e) for e in header["edges"])
        )
        pdim = int(header["private_dim"])
        logs = []
        for line in f:
            if not line.strip():
                continue
            row = json.loads(line)
            steps = tuple(
                EpisodeStep(
                    observations=tuple(
                        ObservationSplit.from_full(np.array(o, dtype=np.float32), pdim)
                        for o in obs_t
                    ),
                    edge_messages=tuple(int(m) for m in msgs_t),
                    actions=tuple(int(a) for a in acts_t),
                    reward=float(r_t),
                )
                for obs_t, msgs_t, acts_t, r_t in zip(
                    row["obs"], row["msgs"], row["acts"], row["rewards"]
                )
            )
            logs.append(EpisodeLog(seed=int(row["seed"]), topology=topo, steps=steps))
    return logs
