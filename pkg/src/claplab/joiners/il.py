"""Imitation-learning joiner: fit the target seat's visible behaviour
directly. One classifier maps the speaker observation to the sent symbol,
a second maps (receiver observation, incoming symbol) to the chosen action.
The two are trained independently on the signalling/listening splits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import InteractionRecord, one_hot
from ..ndiff import Mlp, MlpSpec, ParamStore
from .supervised import FitResult, fit_classifier, split_records_by_episode


def _speak_xy(records: Sequence[InteractionRecord]):
    X = np.stack([r.speaker_obs.full for r in records])
    y = np.array([r.message for r in records], dtype=np.int64)
    return X, y


def _act_xy(records: Sequence[InteractionRecord], alphabet: int):
    X = np.stack(
        [
            np.concatenate([r.receiver_obs.full, one_hot(r.message, alphabet)])
            for r in records
        ]
    )
    y = np.array([r.receiver_action for r in records], dtype=np.int64)
    return X, y


@dataclass
class IlJoiner:
    """Trained imitator; a drop-in `TeamMember`."""

    comm_net: Mlp
    comm_store: ParamStore
    act_net: Mlp
    act_store: ParamStore
    alphabet: int
    n_actions: int

    def speak(self, obs: np.ndarray) -> np.ndarray:
        return self.comm_net.forward_np(self.comm_store, obs).argmax(axis=-1)

    def act(self, obs: np.ndarray, incoming: np.ndarray) -> np.ndarray:
        x = np.concatenate([obs, incoming], axis=-1)
        return self.act_net.forward_np(self.act_store, x).argmax(axis=-1)


def make_il_nets(obs_dim: int, alphabet: int, n_actions: int, hidden=(256,)):
    comm = Mlp("il_comm", MlpSpec(obs_dim, tuple(hidden), alphabet))
    act = Mlp("il_act", MlpSpec(obs_dim + alphabet, tuple(hidden), n_actions))
    return comm, act


def train_il(
    signalling: Sequence[InteractionRecord],
    listening: Sequence[InteractionRecord],
    obs_dim: int,
    alphabet: int,
    n_actions: int,
    seed: int = 0,
    hidden=(256,),
    **fit_kwargs,
) -> tuple[IlJoiner, FitResult, FitResult]:
    """Fit both imitator heads; returns the joiner plus the two fit reports
    (speaking first). `fit_kwargs` pass through to the optimizer loop."""
    if not signalling or not listening:
        raise ValueError("need non-empty signalling and listening sets")
    comm_net, act_net = make_il_nets(obs_dim, alphabet, n_actions, hidden)

    rng = np.random.default_rng([seed, 101])
    comm_store = ParamStore()
    comm_net.init_params(comm_store, rng)
    tr, va = split_records_by_episode(signalling, rng)
    Xv, yv = _speak_xy(va) if va else (None, None)
    fit_c = fit_classifier(
        comm_net, comm_store, *_speak_xy(tr), rng, Xv, yv, **fit_kwargs
    )

    rng = np.random.default_rng([seed, 202])
    act_store = ParamStore()
    act_net.init_params(act_store, rng)
    tr, va = split_records_by_episode(listening, rng)
    Xv, yv = _act_xy(va, alphabet) if va else (None, None)
    fit_a = fit_classifier(
        act_net, act_store, *_act_xy(tr, alphabet), rng, Xv, yv, **fit_kwargs
    )

    joiner = IlJoiner(comm_net, comm_store, act_net, act_store, alphabet, n_actions)
    return joiner, fit_c, fit_a
