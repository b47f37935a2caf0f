"""Interaction dataset construction.

Three sources feed the joiner trainers: eval-mode collection from a trained
community, a position-biased subset of such a collection, and keyboard
recordings of two humans driving together (converted here into
speaker/receiver records by reading each player's action as the other
player's instruction).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    NO_ACTION,
    ChannelTopology,
    InteractionDataset,
    InteractionRecord,
    ObservationSplit,
    SchemaError,
    interaction_lines,
)
from .envs import DrivingConfig, GridworldConfig
from .team import TeamMember, run_team_episodes

HUMAN_ROWS_SCHEMA = "clap-human-rows-v1"


def dataset_fingerprint(dataset: InteractionDataset) -> str:
    """sha256 over the dataset's canonical serialization; equals the sha256
    of a file produced by `write_interactions`."""
    h = hashlib.sha256()
    for line in interaction_lines(dataset):
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()


def collect_interactions(
    env_cfg,
    members: Sequence[TeamMember],
    topology: ChannelTopology,
    alphabet: int,
    target_agent: int,
    n_episodes: int,
    base_seed: int,
) -> InteractionDataset:
    """Run eval-mode episodes and keep, for every step, one record per
    channel edge touching `target_agent` (as speaker and as receiver)."""
    if not topology.edges_touching(target_agent):
        raise ValueError(f"agent {target_agent} touches no channel edge")
    result = run_team_episodes(
        env_cfg, members, topology, alphabet, n_episodes, base_seed, record=True
    )
    records: list[InteractionRecord] = []
    for ep, log in enumerate(result.logs):
        for t, step in enumerate(log.steps):
            for e_idx, (s, r) in enumerate(topology.edges):
                if target_agent not in (s, r):
                    continue
                records.append(
                    InteractionRecord(
                        step=t,
                        speaker_id=s,
                        receiver_id=r,
                        speaker_obs=step.observations[s],
                        message=step.edge_messages[e_idx],
                        receiver_obs=step.observations[r],
                        receiver_action=step.actions[r],
                        episode=ep,
                    )
                )
    if isinstance(env_cfg, GridworldConfig):
        env_name, pdim = "gridworld", 19
    elif isinstance(env_cfg, DrivingConfig):
        env_name, pdim = "driving", 8
    else:
        raise TypeError(f"unsupported env config {type(env_cfg).__name__}")
    return InteractionDataset(
        records=tuple(records),
        alphabet_size=alphabet,
        obs_dim=env_cfg.obs_dim,
        private_dim=pdim,
        env_name=env_name,
        n_agents=topology.n_agents,
        target_agent=target_agent,
    )


def _grid_x_position(obs: ObservationSplit) -> int:
    """Decode the agent's own x column from the leading one-hot block of the
    global part (positions are stored self-first, x block before y block)."""
    block = np.asarray(obs.global_part[:5])
    if block.max() != 1.0 or block.sum() != 1.0:
        raise ValueError("observation does not carry a one-hot x-position block")
    return int(block.argmax())


def bias_filter_first_two_columns(dataset: InteractionDataset) -> InteractionDataset:
    """Keep records taken while the target agent stood in column 0 or 1.

    Decodes the target's x position from its own observation in each record,
    so this only works on gridworld collections.
    """
    if dataset.env_name != "gridworld":
        raise ValueError(
            f"position bias filter needs gridworld records, got {dataset.env_name!r}"
        )
    kept = []
    for i, rec in enumerate(dataset.records):
        if rec.speaker_id == dataset.target_agent:
            own = rec.speaker_obs
        elif rec.receiver_id == dataset.target_agent:
            own = rec.receiver_obs
        else:
            raise ValueError(f"record {i} does not involve the target agent")
        if _grid_x_position(own) <= 1:
            kept.append(rec)
    return dataset.replace_records(kept)


# ---------------------------------------------------------------------------
# Human keyboard recordings (two-player driving sessions)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawHumanRow:
    """One 2 Hz tick of a dual-control session: both observations and the key
    each player held (NO_ACTION when none)."""

    t: int
    obs1: np.ndarray
    obs2: np.ndarray
    act1: int
    act2: int


def human_row_line(row: RawHumanRow) -> str:
    return json.dumps(
        {
            "t": row.t,
            "obs1": np.asarray(row.obs1, dtype=np.float64).tolist(),
            "obs2": np.asarray(row.obs2, dtype=np.float64).tolist(),
            "act1": row.act1,
            "act2": row.act2,
        }
    )


def write_human_rows(rows: Sequence[RawHumanRow], path: str | Path) -> None:
    with Path(path).open("w") as f:
        f.write(json.dumps({"schema": HUMAN_ROWS_SCHEMA}) + "\n")
        for row in rows:
            f.write(human_row_line(row) + "\n")


def read_human_rows(path: str | Path) -> list[RawHumanRow]:
    path = Path(path)
    rows: list[RawHumanRow] = []
    with path.open() as f:
        header = json.loads(f.readline())
        if header.get("schema") != HUMAN_ROWS_SCHEMA:
            raise SchemaError(
                f"{path}: schema {header.get('schema')!r}, expected {HUMAN_ROWS_SCHEMA!r}"
            )
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                rows.append(
                    RawHumanRow(
                        t=int(d["t"]),
                        obs1=np.array(d["obs1"], dtype=np.float32),
                        obs2=np.array(d["obs2"], dtype=np.float32),
                        act1=int(d["act1"]),
                        act2=int(d["act2"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise SchemaError(f"{path}:{lineno}: bad human row: {e}") from e
    return rows


def _split_episodes(rows: Sequence[RawHumanRow]) -> list[list[tuple[int, RawHumanRow]]]:
    """Group rows into episodes; a tick counter that fails to advance starts
    a new episode (recorders emit t = 0, 1, 2, ... within each episode)."""
    episodes: list[list[tuple[int, RawHumanRow]]] = []
    prev_t = None
    for i, row in enumerate(rows):
        if prev_t is None or row.t <= prev_t:
            episodes.append([])
        episodes[-1].append((i, row))
        prev_t = row.t
    return episodes


def augment_human_data(
    rows: Sequence[RawHumanRow],
    n_actions: int = 3,
    private_dim: int = 8,
    strict_both: bool = False,
) -> InteractionDataset:
    """Turn dual-control rows into instruction-following records.

    Each player's held key becomes the message the *other* player sent, so
    every record has message == receiver_action. A row contributes a record
    in a direction only if that direction's action was actually held
    (`strict_both` drops the whole row unless both players acted). Every
    episode also yields a seat-swapped twin episode, doubling the episode
    count; the target agent sits in seat 0 by convention.
    """
    if not rows:
        raise ValueError("no human rows to augment")
    obs_dim = len(np.asarray(rows[0].obs1))
    for i, row in enumerate(rows):
        o1, o2 = np.asarray(row.obs1), np.asarray(row.obs2)
        if o1.shape != (obs_dim,) or o2.shape != (obs_dim,):
            raise ValueError(f"row {i}: observation shapes {o1.shape}/{o2.shape}")
        for act in (row.act1, row.act2):
            if act != NO_ACTION and not (0 <= act < n_actions):
                raise ValueError(f"row {i}: action {act} outside [0, {n_actions})")

    episodes = _split_episodes(rows)
    records: list[InteractionRecord] = []

    def emit(ep: int, t: int, speaker: int, obs_s, obs_r, action: int) -> None:
        records.append(
            InteractionRecord(
                step=t,
                speaker_id=speaker,
                receiver_id=1 - speaker,
                speaker_obs=ObservationSplit.from_full(
                    np.asarray(obs_s, dtype=np.float32), private_dim
                ),
                message=action,
                receiver_obs=ObservationSplit.from_full(
                    np.asarray(obs_r, dtype=np.float32), private_dim
                ),
                receiver_action=action,
                episode=ep,
            )
        )

    out_ep = 0
    for episode in episodes:
        # Original seating, then the seat-swapped twin as its own episode;
        # seat 1 maps to agent id 0 (the conventional target seat).
        for swap in (False, True):
            for _, row in episode:
                o1, o2 = (row.obs2, row.obs1) if swap else (row.obs1, row.obs2)
                a1, a2 = (row.act2, row.act1) if swap else (row.act1, row.act2)
                if strict_both and (a1 == NO_ACTION or a2 == NO_ACTION):
                    continue
                if a2 != NO_ACTION:  # seat 1 instructed seat 2
                    emit(out_ep, row.t, 0, o1, o2, a2)
                if a1 != NO_ACTION:  # seat 2 instructed seat 1
                    emit(out_ep, row.t, 1, o2, o1, a1)
            out_ep += 1

    return InteractionDataset(
        records=tuple(records),
        alphabet_size=n_actions,
        obs_dim=obs_dim,
        private_dim=private_dim,
        env_name="driving",
        n_agents=2,
        target_agent=0,
    )
