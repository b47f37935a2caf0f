"""Translation-based joiner.

Rather than imitating the target seat from scratch, reuse a policy
pre-trained in a *different* community and learn only a mapping between the
two message protocols: one classifier translates what the pre-trained agent
would say into the target community's symbol, another translates received
target symbols back into the pre-trained protocol. The pre-trained policy's
parameters are never updated here (they live in their own store, which the
optimizer never sees).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import InteractionRecord, one_hot
from ..mappo.nets import PolicyNet
from ..ndiff import Mlp, MlpSpec, ParamStore
from .supervised import FitResult, fit_classifier, split_records_by_episode

TRANSLATOR_HIDDEN = (256, 256)


def label_ec_messages(
    records: Sequence[InteractionRecord], ec_policy, ec_store
) -> np.ndarray:
    """The symbol the pre-trained agent would emit in each record's speaker
    situation. Works for both splits — listening records carry the speaker
    observation precisely so these labels can be computed."""
    if not records:
        return np.zeros(0, dtype=np.int64)
    X = np.stack([r.speaker_obs.full for r in records])
    return ec_policy.comm_logits_np(ec_store, X).argmax(axis=-1).astype(np.int64)


def _id_block(ids: np.ndarray, n_agents: int, include: bool) -> np.ndarray | None:
    return one_hot(ids, n_agents) if include else None


def _concat(parts) -> np.ndarray:
    return np.concatenate([p for p in parts if p is not None], axis=-1)


def _sig_xy(records, ec_labels, ec_alphabet, n_agents, include_ids):
    X = _concat(
        [
            np.stack([r.speaker_obs.full for r in records]),
            one_hot(ec_labels, ec_alphabet),
            _id_block(
                np.array([r.receiver_id for r in records]), n_agents, include_ids
            ),
        ]
    )
    y = np.array([r.message for r in records], dtype=np.int64)
    return X, y


def _lis_xy(records, ec_labels, alphabet, n_agents, include_ids):
    X = _concat(
        [
            np.stack([r.receiver_obs.full for r in records]),
            one_hot(np.array([r.message for r in records]), alphabet),
            _id_block(
                np.array([r.speaker_id for r in records]), n_agents, include_ids
            ),
        ]
    )
    return X, np.asarray(ec_labels, dtype=np.int64)


def _fit_translator(
    name: str,
    records,
    xy,
    input_dim: int,
    out_dim: int,
    seed_tag: list[int],
    hidden,
    fit_kwargs,
) -> tuple[Mlp, ParamStore, FitResult]:
    net = Mlp(name, MlpSpec(input_dim, tuple(hidden), out_dim))
    store = ParamStore()
    rng = np.random.default_rng(seed_tag)
    net.init_params(store, rng)
    tr_idx, va_idx = _episode_split_indices(records, rng)
    X, y = xy
    fit = fit_classifier(
        net,
        store,
        X[tr_idx],
        y[tr_idx],
        rng,
        X[va_idx] if len(va_idx) else None,
        y[va_idx] if len(va_idx) else None,
        **fit_kwargs,
    )
    return net, store, fit


def _episode_split_indices(records, rng) -> tuple[np.ndarray, np.ndarray]:
    tr, va = split_records_by_episode(list(records), rng)
    tr_keys = {id(r) for r in tr}
    idx = np.arange(len(records))
    mask = np.array([id(r) in tr_keys for r in records])
    return idx[mask], idx[~mask]


def train_signal_translator(
    signalling: Sequence[InteractionRecord],
    ec_policy,
    ec_store,
    alphabet: int,
    ec_alphabet: int,
    n_agents: int,
    include_ids: bool = True,
    seed: int = 0,
    hidden=TRANSLATOR_HIDDEN,
    **fit_kwargs,
) -> tuple[Mlp, ParamStore, FitResult]:
    """Fit: (speaker obs, pre-trained symbol) -> target symbol."""
    if not signalling:
        raise ValueError("empty signalling set")
    labels = label_ec_messages(signalling, ec_policy, ec_store)
    obs_dim = signalling[0].speaker_obs.dim
    xy = _sig_xy(signalling, labels, ec_alphabet, n_agents, include_ids)
    input_dim = obs_dim + ec_alphabet + (n_agents if include_ids else 0)
    return _fit_translator(
        "tau_s", signalling, xy, input_dim, alphabet, [seed, 303], hidden, fit_kwargs
    )


def train_listen_translator(
    listening: Sequence[InteractionRecord],
    ec_policy,
    ec_store,
    alphabet: int,
    ec_alphabet: int,
    n_agents: int,
    include_ids: bool = True,
    seed: int = 0,
    hidden=TRANSLATOR_HIDDEN,
    **fit_kwargs,
) -> tuple[Mlp, ParamStore, FitResult]:
    """Fit: (receiver obs, received target symbol) -> pre-trained symbol."""
    if not listening:
        raise ValueError("empty listening set")
    labels = label_ec_messages(listening, ec_policy, ec_store)
    obs_dim = listening[0].receiver_obs.dim
    xy = _lis_xy(listening, labels, alphabet, n_agents, include_ids)
    input_dim = obs_dim + alphabet + (n_agents if include_ids else 0)
    return _fit_translator(
        "tau_r", listening, xy, input_dim, ec_alphabet, [seed, 404], hidden, fit_kwargs
    )


@dataclass
class EctlJoiner:
    """Pre-trained policy + translation pair; a drop-in `TeamMember`.

    `speak_to` / `listen_from` are the counterparty agent ids fed to the
    identifier inputs at eval time (constant on a ring)."""

    ec_policy: PolicyNet
    ec_store: ParamStore
    tau_s: Mlp
    tau_s_store: ParamStore
    tau_r: Mlp
    tau_r_store: ParamStore
    alphabet: int
    ec_alphabet: int
    n_agents: int
    include_ids: bool
    speak_to: int
    listen_from: int

    def _ids(self, agent: int, batch: int) -> np.ndarray | None:
        if not self.include_ids:
            return None
        return one_hot(np.full(batch, agent), self.n_agents)

    def speak(self, obs: np.ndarray) -> np.ndarray:
        native = self.ec_policy.comm_logits_np(self.ec_store, obs).argmax(axis=-1)
        x = _concat(
            [obs, one_hot(native, self.ec_alphabet), self._ids(self.speak_to, len(obs))]
        )
        return self.tau_s.forward_np(self.tau_s_store, x).argmax(axis=-1)

    def act(self, obs: np.ndarray, incoming: np.ndarray) -> np.ndarray:
        if incoming.shape[-1] != self.alphabet:
            raise ValueError(
                f"incoming block has {incoming.shape[-1]} columns, expected "
                f"alphabet {self.alphabet} (single sender)"
            )
        x = _concat([obs, incoming, self._ids(self.listen_from, len(obs))])
        native = self.tau_r.forward_np(self.tau_r_store, x).argmax(axis=-1)
        return self.ec_policy.action_logits_np(
            self.ec_store, obs, one_hot(native, self.ec_alphabet)
        ).argmax(axis=-1)


def train_ectl(
    signalling: Sequence[InteractionRecord],
    listening: Sequence[InteractionRecord],
    ec_policy: PolicyNet,
    ec_store: ParamStore,
    alphabet: int,
    n_agents: int,
    include_ids: bool = True,
    seed: int = 0,
    **fit_kwargs,
) -> tuple[EctlJoiner, FitResult, FitResult]:
    """Train both translators against a frozen pre-trained policy."""
    if not signalling or not listening:
        raise ValueError("need non-empty signalling and listening sets")
    ec_alphabet = ec_policy.alphabet
    tau_s, s_store, fit_s = train_signal_translator(
        signalling, ec_policy, ec_store, alphabet, ec_alphabet,
        n_agents, include_ids, seed, **fit_kwargs,
    )
    tau_r, r_store, fit_r = train_listen_translator(
        listening, ec_policy, ec_store, alphabet, ec_alphabet,
        n_agents, include_ids, seed, **fit_kwargs,
    )
    joiner = EctlJoiner(
        ec_policy=ec_policy,
        ec_store=ec_store,
        tau_s=tau_s,
        tau_s_store=s_store,
        tau_r=tau_r,
        tau_r_store=r_store,
        alphabet=alphabet,
        ec_alphabet=ec_alphabet,
        n_agents=n_agents,
        include_ids=include_ids,
        speak_to=_unique_counterparty(signalling, "receiver_id"),
        listen_from=_unique_counterparty(listening, "speaker_id"),
    )
    return joiner, fit_s, fit_r


def _unique_counterparty(records, field: str) -> int:
    ids = {getattr(r, field) for r in records}
    # with several counterparties the identifier input varies per record at
    # train time; eval speaks to the most frequent one
    counts = {i: sum(1 for r in records if getattr(r, field) == i) for i in ids}
    return max(counts, key=counts.get)
