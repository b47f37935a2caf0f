"""Policy and central value networks for communicating teams.

One PolicyNet is shared by every agent in a community: an observation
encoder, a message head producing symbol logits for the agent's outgoing
channel, and an action head that reads the encoded observation together
with the (soft or one-hot) incoming messages. The value net is a separate
MLP over the concatenation of all agents' observations and shares nothing
with the policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ChannelTopology
from ..ndiff import Mlp, MlpSpec, ParamStore, Tape, Tensor

ENCODER_HIDDEN = (256, 256)
ACTION_HIDDEN = (256,)
VALUE_HIDDEN = (256, 256)


def routing_index(topology: ChannelTopology, n_rows: int) -> np.ndarray:
    """Row-gather indices that deliver messages on step-major flat batches.

    For flat row layout `row = step * n_agents + agent`, entry
    `out[slot, step * n + r]` is the flat row of the slot-th sender (sorted
    by sender id) delivering to receiver r. Requires every agent to have
    the same in-degree (parameter sharing needs homogeneous shapes).
    """
    n = topology.n_agents
    if n_rows % n:
        raise ValueError(f"flat batch of {n_rows} rows not divisible by {n} agents")
    senders = [topology.senders_to(r) for r in range(n)]
    degree = len(senders[0])
    if any(len(s) != degree for s in senders) or degree == 0:
        raise ValueError("all agents must share one positive in-degree")
    base = np.arange(n_rows // n) * n
    out = np.empty((degree, n_rows), dtype=np.int64)
    for r in range(n):
        for slot, s in enumerate(senders[r]):
            out[slot, base + r] = base + s
    return out


@dataclass(frozen=True)
class PolicyNet:
    obs_dim: int
    n_actions: int
    alphabet: int
    in_degree: int = 1
    enc_hidden: tuple[int, ...] = ENCODER_HIDDEN
    act_hidden: tuple[int, ...] = ACTION_HIDDEN

    def __post_init__(self):
        if min(self.obs_dim, self.n_actions, self.in_degree) < 1 or self.alphabet < 2:
            raise ValueError("bad policy dimensions")
        if len(self.enc_hidden) < 1:
            raise ValueError("encoder needs at least one layer")

    @property
    def encoder(self) -> Mlp:
        return Mlp(
            "enc", MlpSpec(self.obs_dim, self.enc_hidden[:-1], self.enc_hidden[-1])
        )

    @property
    def comm_head(self) -> Mlp:
        return Mlp("comm", MlpSpec(self.enc_hidden[-1], (), self.alphabet))

    @property
    def action_head(self) -> Mlp:
        in_dim = self.enc_hidden[-1] + self.alphabet * self.in_degree
        return Mlp("act", MlpSpec(in_dim, self.act_hidden, self.n_actions))

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        self.encoder.init_params(store, rng)
        self.comm_head.init_params(store, rng)
        self.action_head.init_params(store, rng)

    # -- tape (training) path ------------------------------------------------

    def encode(self, store: ParamStore, tape: Tape, obs: Tensor) -> Tensor:
        return tape.tanh(self.encoder.forward(store, obs, tape))

    def comm_logits(self, store: ParamStore, tape: Tape, feats: Tensor) -> Tensor:
        return self.comm_head.forward(store, feats, tape)

    def action_logits(
        self, store: ParamStore, tape: Tape, feats: Tensor, incoming: Tensor
    ) -> Tensor:
        return self.action_head.forward(
            store, tape.concat([feats, incoming], axis=-1), tape
        )

    # -- numpy (collection / evaluation) path ---------------------------------

    def encode_np(self, store: ParamStore, obs: np.ndarray) -> np.ndarray:
        return np.tanh(self.encoder.forward_np(store, obs))

    def comm_logits_np(self, store: ParamStore, obs: np.ndarray) -> np.ndarray:
        return self.comm_head.forward_np(store, self.encode_np(store, obs))

    def action_logits_np(
        self, store: ParamStore, obs: np.ndarray, incoming: np.ndarray
    ) -> np.ndarray:
        feats = self.encode_np(store, obs)
        return self.action_head.forward_np(
            store, np.concatenate([feats, incoming], axis=-1)
        )


@dataclass(frozen=True)
class CentralValueNet:
    joint_obs_dim: int
    hidden: tuple[int, ...] = VALUE_HIDDEN

    @property
    def net(self) -> Mlp:
        return Mlp("vf", MlpSpec(self.joint_obs_dim, self.hidden, 1))

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        self.net.init_params(store, rng)

    def forward(self, store: ParamStore, tape: Tape, joint_obs: Tensor) -> Tensor:
        return self.net.forward(store, joint_obs, tape)

    def forward_np(self, store: ParamStore, joint_obs: np.ndarray) -> np.ndarray:
        return self.net.forward_np(store, joint_obs)[:, 0]
