"""Replacement evaluation and the probes that disentangle *why* a team's
reward moves: channel blocking, private-information blinding, and the
signalling/listening dependence statistics.

All statistics work on eval-mode rollouts (greedy actions, discretized
messages), so every number here is reproducible from seeds alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats as sstats

from .core import ChannelTopology, InteractionRecord, one_hot, split_interactions
from .datasets import collect_interactions
from .envs import DrivingConfig
from .joiners import train_ectl, train_il
from .team import CommunityMember, RandomMember, TeamMember, run_team_episodes


@dataclass(frozen=True)
class EvalReport:
    n_episodes: int
    mean: float
    ci95: float          # normal-approximation half width over episode totals
    rewards: np.ndarray

    @staticmethod
    def from_rewards(rewards: np.ndarray) -> "EvalReport":
        r = np.asarray(rewards, dtype=np.float64)
        n = len(r)
        half = 1.96 * r.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
        return EvalReport(n_episodes=n, mean=float(r.mean()), ci95=float(half), rewards=r)


def cis_separated(a: EvalReport, b: EvalReport) -> bool:
    """True when the two 95% intervals do not overlap."""
    lo_a, hi_a = a.mean - a.ci95, a.mean + a.ci95
    lo_b, hi_b = b.mean - b.ci95, b.mean + b.ci95
    return hi_a < lo_b or hi_b < lo_a


def welch_pvalue(a: np.ndarray, b: np.ndarray) -> float:
    return float(sstats.ttest_ind(a, b, equal_var=False).pvalue)


def check_team_compat(env_cfg, members: Sequence[TeamMember],
                      topology: ChannelTopology, alphabet: int) -> None:
    """Fail fast on dimension mismatches, before any episode runs."""
    obs_dim = env_cfg.obs_dim
    for i, m in enumerate(members):
        in_deg = len(topology.senders_to(i))
        if isinstance(m, CommunityMember):
            p = m.policy
            if p.obs_dim != obs_dim:
                raise ValueError(f"seat {i}: policy obs dim {p.obs_dim} != env {obs_dim}")
            if p.alphabet != alphabet:
                raise ValueError(f"seat {i}: policy alphabet {p.alphabet} != {alphabet}")
            if p.in_degree != in_deg:
                raise ValueError(f"seat {i}: policy in-degree {p.in_degree} != {in_deg}")
        elif hasattr(m, "comm_net"):  # imitator
            if m.comm_net.spec.input_dim != obs_dim:
                raise ValueError(f"seat {i}: imitator obs dim mismatch")
            if m.alphabet != alphabet or in_deg != 1:
                raise ValueError(f"seat {i}: imitator alphabet/in-degree mismatch")
        elif hasattr(m, "ec_policy"):  # translator
            if m.ec_policy.obs_dim != obs_dim:
                raise ValueError(f"seat {i}: translator obs dim mismatch")
            if m.alphabet != alphabet or in_deg != 1:
                raise ValueError(f"seat {i}: translator alphabet/in-degree mismatch")


def evaluate_team(
    env_cfg,
    members: Sequence[TeamMember],
    topology: ChannelTopology,
    alphabet: int,
    n_episodes: int = 500,
    base_seed: int = 0,
    block_comm: bool = False,
) -> EvalReport:
    check_team_compat(env_cfg, members, topology, alphabet)
    res = run_team_episodes(
        env_cfg, members, topology, alphabet, n_episodes, base_seed,
        block_comm=block_comm,
    )
    return EvalReport.from_rewards(res.rewards)


def team_with_replacement(
    members: Sequence[TeamMember], k: int, joiner: TeamMember
) -> list[TeamMember]:
    if not 0 <= k < len(members):
        raise ValueError(f"replacement index {k} outside team of {len(members)}")
    return [joiner if i == k else m for i, m in enumerate(members)]


def blind_private_members(members: Sequence[TeamMember]) -> list[CommunityMember]:
    """Copies whose action pass sees zeroed private observations (their
    speaking pass is untouched)."""
    out = []
    for i, m in enumerate(members):
        if not isinstance(m, CommunityMember):
            raise ValueError(f"seat {i}: private-info ablation needs a declared split")
        out.append(
            CommunityMember(
                policy=m.policy, store=m.store,
                private_dim=m.private_dim, blind_private=True,
            )
        )
    return out


# ------------------------------------------------------------------ probes


@dataclass(frozen=True)
class SignallingProbe:
    mi_nats: float            # plug-in estimate
    mi_corrected: float       # Miller–Madow bias corrected
    null_mean: float
    null_std: float
    z: float
    n_samples: int


def _plugin_mi(x: np.ndarray, s: np.ndarray) -> tuple[float, int, int, int]:
    joint = {}
    for pair in zip(x.tolist(), s.tolist()):
        joint[pair] = joint.get(pair, 0) + 1
    n = len(x)
    px, ps = {}, {}
    for (a, b), c in joint.items():
        px[a] = px.get(a, 0) + c
        ps[b] = ps.get(b, 0) + c
    mi = 0.0
    for (a, b), c in joint.items():
        p_ab = c / n
        mi += p_ab * np.log(p_ab * n * n / (px[a] * ps[b]))
    return mi, len(px), len(ps), len(joint)


def mutual_information_probe(
    cells: np.ndarray,
    symbols: np.ndarray,
    n_permutations: int = 200,
    seed: int = 0,
) -> SignallingProbe:
    """MI between two discrete sequences with a shuffled-pairs null."""
    cells = np.asarray(cells)
    symbols = np.asarray(symbols)
    if cells.shape != symbols.shape or cells.ndim != 1 or len(cells) == 0:
        raise ValueError("need two equal-length non-empty 1-d sequences")
    n = len(cells)
    mi, kx, ks, kxs = _plugin_mi(cells, symbols)
    mm = mi + ((kx - 1) + (ks - 1) - (kxs - 1)) / (2 * n)
    rng = np.random.default_rng(seed)
    null = np.array(
        [_plugin_mi(cells, rng.permutation(symbols))[0] for _ in range(n_permutations)]
    )
    nstd = float(null.std(ddof=1))
    excess = mi - float(null.mean())
    if nstd > 1e-12:
        z = excess / nstd
    else:  # degenerate null (e.g. a constant stream): only the sign matters
        z = np.inf if excess > 1e-12 else 0.0
    return SignallingProbe(
        mi_nats=float(mi), mi_corrected=float(mm),
        null_mean=float(null.mean()), null_std=nstd, z=float(z), n_samples=n,
    )


def goal_guess_cells(records: Sequence[InteractionRecord]) -> np.ndarray:
    """Ground-truth probe variable on gridworld: the speaker's close-guess
    cell id (x * 5 + y), decoded from its private one-hot blocks."""
    out = np.empty(len(records), dtype=np.int64)
    for i, r in enumerate(records):
        priv = np.asarray(r.speaker_obs.private_part)
        if priv.shape[0] != 19:
            raise ValueError("goal-guess decoding needs gridworld observations")
        out[i] = int(priv[9:14].argmax()) * 5 + int(priv[14:19].argmax())
    return out


def positive_signalling_probe(
    env_cfg,
    members: Sequence[TeamMember],
    topology: ChannelTopology,
    alphabet: int,
    speaker: int,
    n_episodes: int = 500,
    base_seed: int = 0,
    n_permutations: int = 200,
) -> SignallingProbe:
    """Does the speaker's symbol carry information about what it privately
    observes? MI between its goal-guess cell and the symbol it sends."""
    ds = collect_interactions(
        env_cfg, members, topology, alphabet, speaker, n_episodes, base_seed
    )
    sig, _ = split_interactions(ds.records, speaker)
    cells = goal_guess_cells(sig)
    symbols = np.array([r.message for r in sig])
    return mutual_information_probe(cells, symbols, n_permutations, seed=base_seed)


@dataclass(frozen=True)
class ListeningProbe:
    statistic: float   # mean TV(π(·|o, m_true), mean_m π(·|o, m))
    se: float
    z: float
    n_samples: int


def action_message_sensitivity(
    act_probs_fn,
    obs: np.ndarray,
    true_messages: np.ndarray,
    alphabet: int,
) -> ListeningProbe:
    """Interventional message sensitivity over the visited states `obs`.

    `act_probs_fn(obs, incoming_one_hot) -> (B, A) action distribution`.
    """
    obs = np.asarray(obs)
    n = len(obs)
    if n == 0:
        raise ValueError("no states to probe")
    per_m = np.stack(
        [
            act_probs_fn(obs, one_hot(np.full(n, m), alphabet))
            for m in range(alphabet)
        ]
    )  # (K, B, A)
    mix = per_m.mean(axis=0)
    true_p = per_m[np.asarray(true_messages), np.arange(n)]
    tv = 0.5 * np.abs(true_p - mix).sum(axis=-1)
    se = float(tv.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    z = float(tv.mean() / se) if se > 0 else np.inf if tv.mean() > 0 else 0.0
    return ListeningProbe(statistic=float(tv.mean()), se=se, z=z, n_samples=n)


def positive_listening_probe(
    env_cfg,
    members: Sequence[TeamMember],
    topology: ChannelTopology,
    alphabet: int,
    listener: int,
    n_episodes: int = 500,
    base_seed: int = 0,
) -> ListeningProbe:
    member = members[listener]
    if not isinstance(member, CommunityMember):
        raise ValueError("listening probe needs a community policy with probabilities")
    ds = collect_interactions(
        env_cfg, members, topology, alphabet, listener, n_episodes, base_seed
    )
    _, lis = split_interactions(ds.records, listener)
    obs = np.stack([r.receiver_obs.full for r in lis])
    msgs = np.array([r.message for r in lis])
    return action_message_sensitivity(member.act_probs, obs, msgs, alphabet)


# ------------------------------------------------------- reward normalization


@dataclass(frozen=True)
class NormalizedReward:
    value: float       # (joiner - random) / (original - random)
    raw_ratio: float   # joiner mean / original mean, for transparency


def normalized_reward(
    joiner: EvalReport, original: EvalReport, random_baseline: EvalReport
) -> NormalizedReward:
    denom = original.mean - random_baseline.mean
    if abs(denom) < 1e-9:
        raise ValueError("original and random baselines coincide; cannot normalize")
    value = (joiner.mean - random_baseline.mean) / denom
    if abs(original.mean) < 1e-12:
        raw = np.inf if joiner.mean > 0 else 0.0
    else:
        raw = joiner.mean / original.mean
    return NormalizedReward(value=float(value), raw_ratio=float(raw))


# ---------------------------------------------------------------- sweeps

SWEEP_FIELDS = ["env", "method", "n_collect", "trial", "agent_k", "mean", "ci95",
                "norm_mean", "seed"]


def _read_done_cells(path: Path) -> set[tuple]:
    if not path.exists():
        return set()
    with path.open() as f:
        return {
            (row["env"], row["method"], int(row["n_collect"]), int(row["trial"]))
            for row in csv.DictReader(f)
        }


def data_scaling_sweep(
    env_cfg,
    env_name: str,
    team: Sequence[TeamMember],
    ec_policy,
    ec_store,
    topology: ChannelTopology,
    alphabet: int,
    n_actions: int,
    target_agent: int,
    n_collect_list: Sequence[int],
    out_csv: str | Path,
    methods: Sequence[str] = ("il", "ectl"),
    trials: int = 3,
    n_eval_episodes: int = 500,
    base_seed: int = 0,
    fit_kwargs: dict | None = None,
) -> list[dict]:
    """Full collect→train→evaluate pipeline per (n_collect, method, trial).

    Cells already present in `out_csv` are skipped (resumable); a failing
    cell is reported and the sweep continues. Both methods inside a trial
    share the collection and the evaluation seeds, so comparisons are paired.
    """
    out_csv = Path(out_csv)
    fit_kwargs = fit_kwargs or {}
    done = _read_done_cells(out_csv)
    obs_dim = env_cfg.obs_dim
    rows: list[dict] = []

    orig = evaluate_team(env_cfg, team, topology, alphabet, n_eval_episodes,
                         base_seed + 900_000_000)
    rand_member = RandomMember(n_actions, alphabet, seed=base_seed + 5)
    rand = evaluate_team(
        env_cfg, team_with_replacement(team, target_agent, rand_member),
        topology, alphabet, n_eval_episodes, base_seed + 900_000_000,
    )

    write_header = not out_csv.exists()
    with out_csv.open("a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_FIELDS)
        if write_header:
            writer.writeheader()
        for n_collect in n_collect_list:
            for trial in range(trials):
                collect_seed = base_seed + 1_000_000 * (trial + 1) + 1000 * n_collect
                eval_seed = base_seed + 500_000_000 + 1_000_000 * trial
                ds = None
                for method in methods:
                    if (env_name, method, n_collect, trial) in done:
                        continue
                    try:
                        if ds is None:
                            ds = collect_interactions(
                                env_cfg, team, topology, alphabet, target_agent,
                                n_collect, collect_seed,
                            )
                            sig, lis = split_interactions(ds.records, target_agent)
                        if method == "il":
                            joiner, *_ = train_il(
                                sig, lis, obs_dim, alphabet, n_actions,
                                seed=collect_seed, **fit_kwargs,
                            )
                        elif method == "ectl":
                            joiner, *_ = train_ectl(
                                sig, lis, ec_policy, ec_store, alphabet,
                                topology.n_agents, seed=collect_seed, **fit_kwargs,
                            )
                        else:
                            raise ValueError(f"unknown method {method!r}")
                        rep = evaluate_team(
                            env_cfg,
                            team_with_replacement(team, target_agent, joiner),
                            topology, alphabet, n_eval_episodes, eval_seed,
                        )
                        norm = normalized_reward(rep, orig, rand).value
                        row = {
                            "env": env_name, "method": method,
                            "n_collect": n_collect, "trial": trial,
                            "agent_k": target_agent,
                            "mean": f"{rep.mean:.6f}", "ci95": f"{rep.ci95:.6f}",
                            "norm_mean": f"{norm:.6f}", "seed": collect_seed,
                        }
                        writer.writerow(row)
                        f.flush()
                        rows.append(row)
                    except Exception as e:  # noqa: BLE001 - sweep must survive cells
                        print(f"sweep cell ({method}, N={n_collect}, trial {trial}) "
                              f"failed: {e}")
    return rows


# ------------------------------------------------- occupancy (driving plots)


def position_occupancy(
    env_cfg: DrivingConfig,
    members: Sequence[TeamMember],
    topology: ChannelTopology,
    alphabet: int,
    n_episodes: int,
    base_seed: int,
    bins: int = 50,
) -> np.ndarray:
    """2-d histogram of agent positions before they reach their goals."""
    from .mappo.trainer import make_env_batch

    hist = np.zeros((bins, bins))
    half = env_cfg.arena_half
    edges = np.linspace(-half, half, bins + 1)
    chunk = 256
    n = topology.n_agents
    for start in range(0, n_episodes, chunk):
        m = min(chunk, n_episodes - start)
        env = make_env_batch(env_cfg, m, base_seed + start, auto_reset=False)
        for _ in range(env_cfg.horizon):
            live = ~env.done
            if not live.any():
                break
            obs3 = env.observe()
            symbols = np.stack(
                [members[i].speak(obs3[:, i, :]) for i in range(n)], axis=1
            )
            actions = np.empty((m, n), dtype=np.int64)
            for r in range(n):
                inc = np.concatenate(
                    [one_hot(symbols[:, s], alphabet) for s in topology.senders_to(r)],
                    axis=-1,
                )
                actions[:, r] = members[r].act(obs3[:, r, :], inc)
            counted = live[:, None] & ~env.reached
            for i in range(n):
                sel = counted[:, i]
                if sel.any():
                    h, _, _ = np.histogram2d(
                        env.positions[sel, i, 0], env.positions[sel, i, 1],
                        bins=(edges, edges),
                    )
                    hist += h
            env.step(actions)
    return hist
