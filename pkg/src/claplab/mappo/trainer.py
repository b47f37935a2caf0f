"""Self-play training of a communicating community with clipped PPO and a
central value function.

Collection runs the policy in train mode (soft relaxed messages); the
Gumbel noise drawn for every message is stored in the rollout and replayed
during updates so the old/new action log-probs refer to the same sampled
channel, keeping importance ratios consistent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..core import ChannelTopology
from ..envs import (
    DrivingBatch,
    DrivingConfig,
    GridworldBatch,
    GridworldConfig,
)
from ..ndiff import (
    NonFiniteError,
    ParamStore,
    Tape,
    Tensor,
    adam_step,
    gumbel_softmax,
    gumbel_softmax_np,
    load_store,
    log_softmax_np,
    sample_categorical,
    sample_gumbel,
    save_store,
    softmax_np,
)
from ..ndiff.nn import entropy_mean
from .gae import compute_gae
from .nets import CentralValueNet, PolicyNet, routing_index

CURVE_FIELDS = ("iteration", "steps", "mean_reward", "policy_loss", "value_loss", "entropy")


class DivergenceError(RuntimeError):
    """Training produced non-finite numbers; last good params were saved."""

    def __init__(self, message: str, checkpoint: Path | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class MappoConfig:
    env: str
    alphabet: int
    temperature: float
    batch_steps: int
    iterations: int
    minibatch: int = 2048
    sgd_iters: int = 5
    n_envs: int = 1000
    lr: float = 5e-4
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    vf_clip: float = 10.0
    vf_coef: float = 0.25
    ent_coef: float = 0.01
    kl_coef: float = 0.0
    normalize_advantages: bool = True
    detach_channel: bool = False
    target_reward: float | None = None
    target_window: int = 5
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.env not in ("gridworld", "driving"):
            raise ValueError(f"unknown env {self.env!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if self.batch_steps % self.n_envs:
            raise ValueError("batch_steps must be divisible by n_envs")

    @classmethod
    def for_gridworld(cls, **overrides) -> "MappoConfig":
        base = cls(
            env="gridworld",
            alphabet=5,
            temperature=2.0,
            batch_steps=10_000,
            iterations=300,
            minibatch=2048,
            sgd_iters=5,
            n_envs=1000,
        )
        return replace(base, **overrides) if overrides else base

    @classmethod
    def for_driving(cls, **overrides) -> "MappoConfig":
        base = cls(
            env="driving",
            alphabet=16,
            temperature=5.0,
            batch_steps=200_000,
            iterations=80,
            minibatch=2048,
            sgd_iters=10,
            n_envs=1000,
        )
        return replace(base, **overrides) if overrides else base


@dataclass
class RolloutBatch:
    obs: np.ndarray        # (T, B, N, D) float32
    noise: np.ndarray      # (T, B, N, K) float32, Gumbel draws per message
    actions: np.ndarray    # (T, B, N) int64
    logp: np.ndarray       # (T, B, N) float32, behaviour log-probs
    rewards: np.ndarray    # (T, B) float64, team reward
    dones: np.ndarray      # (T, B) bool
    values: np.ndarray     # (T, B) float64
    bootstrap_value: np.ndarray          # (B,)
    episode_returns: list[float]
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None


def make_env_batch(env_cfg, n_envs: int, base_seed: int, auto_reset: bool = True):
    if isinstance(env_cfg, GridworldConfig):
        return GridworldBatch(env_cfg, n_envs, base_seed, auto_reset)
    if isinstance(env_cfg, DrivingConfig):
        return DrivingBatch(env_cfg, n_envs, base_seed, auto_reset)
    raise TypeError(f"unsupported env config {type(env_cfg).__name__}")


def collect_rollout(
    env_batch,
    policy: PolicyNet,
    pstore: ParamStore,
    vnet: CentralValueNet,
    vstore: ParamStore,
    topology: ChannelTopology,
    cfg: MappoConfig,
    rng: np.random.Generator,
) -> RolloutBatch:
    B = env_batch.n_envs
    N = topology.n_agents
    D = policy.obs_dim
    K = cfg.alphabet
    T = cfg.batch_steps // B
    perm = routing_index(topology, B * N)

    obs_buf = np.empty((T, B, N, D), dtype=np.float32)
    noise_buf = np.empty((T, B, N, K), dtype=np.float32)
    act_buf = np.empty((T, B, N), dtype=np.int64)
    logp_buf = np.empty((T, B, N), dtype=np.float32)
    rew_buf = np.empty((T, B), dtype=np.float64)
    done_buf = np.empty((T, B), dtype=bool)
    val_buf = np.empty((T, B), dtype=np.float64)

    running = np.zeros(B)
    completed: list[float] = []
    rows = np.arange(B * N)

    for t in range(T):
        obs3 = env_batch.observe()
        flat = obs3.reshape(B * N, D)
        feats = policy.encode_np(pstore, flat)
        clogits = policy.comm_head.forward_np(pstore, feats)
        noise = sample_gumbel(rng, clogits.shape)
        soft = gumbel_softmax_np(clogits, noise, cfg.temperature)
        incoming = np.concatenate(
            [soft[perm[s]] for s in range(policy.in_degree)], axis=-1
        )
        alogits = policy.action_head.forward_np(
            pstore, np.concatenate([feats, incoming], axis=-1)
        )
        actions = sample_categorical(rng, softmax_np(alogits))
        logp = log_softmax_np(alogits)[rows, actions]
        values = vnet.forward_np(vstore, obs3.reshape(B, N * D))

        rewards, done_now = env_batch.step(actions.reshape(B, N))
        team = rewards if rewards.ndim == 1 else rewards.sum(axis=1)

        obs_buf[t] = obs3
        noise_buf[t] = noise.reshape(B, N, K)
        act_buf[t] = actions.reshape(B, N)
        logp_buf[t] = logp.reshape(B, N)
        rew_buf[t] = team
        done_buf[t] = done_now
        val_buf[t] = values

        running += team
        for b in np.flatnonzero(done_now):
            completed.append(float(running[b]))
            running[b] = 0.0

    bootstrap = vnet.forward_np(vstore, env_batch.observe().reshape(B, N * D))
    return RolloutBatch(
        obs=obs_buf,
        noise=noise_buf,
        actions=act_buf,
        logp=logp_buf,
        rewards=rew_buf,
        dones=done_buf,
        values=val_buf,
        bootstrap_value=bootstrap,
        episode_returns=completed,
    )


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Whole-batch normalization to zero mean / unit std."""
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8)


def ppo_update(
    policy: PolicyNet,
    vnet: CentralValueNet,
    pstore: ParamStore,
    vstore: ParamStore,
    topology: ChannelTopology,
    batch: RolloutBatch,
    cfg: MappoConfig,
    rng: np.random.Generator,
) -> dict[str, float]:
    T, B, N, D = batch.obs.shape
    K = cfg.alphabet
    if batch.advantages is None or batch.returns is None:
        raise ValueError("run compute_gae before ppo_update")

    adv = batch.advantages
    if cfg.normalize_advantages:
        adv = normalize_advantages(adv)

    R = T * B
    obs_r = batch.obs.reshape(R, N, D)
    noise_r = batch.noise.reshape(R, N, K)
    act_r = batch.actions.reshape(R, N)
    logp_r = batch.logp.reshape(R, N).astype(np.float32)
    adv_r = adv.reshape(R).astype(np.float32)
    vold_r = batch.values.reshape(R).astype(np.float32)
    ret_r = np.asarray(batch.returns).reshape(R).astype(np.float32)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    n_mb = 0

    for _ in range(cfg.sgd_iters):
        order = rng.permutation(R)
        for start in range(0, R, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            m = len(idx)
            perm = routing_index(topology, m * N)

            # --- policy step (gradients flow through the channel) ---
            tape = Tape()
            obs_t = Tensor(obs_r[idx].reshape(m * N, D))
            feats = policy.encode(pstore, tape, obs_t)
            clogits = policy.comm_logits(pstore, tape, feats)
            soft = gumbel_softmax(
                tape, clogits, noise_r[idx].reshape(m * N, K), cfg.temperature
            )
            if cfg.detach_channel:
                soft = tape.stop_gradient(soft)
            incoming = tape.concat(
                [tape.take_rows(soft, perm[s]) for s in range(policy.in_degree)],
                axis=-1,
            )
            alogits = policy.action_logits(pstore, tape, feats, incoming)
            logp_new = tape.take_per_row(
                tape.log_softmax(alogits), act_r[idx].reshape(m * N)
            )
            ratio = tape.exp(
                tape.sub(logp_new, tape.constant(logp_r[idx].reshape(m * N)))
            )
            adv_c = tape.constant(np.repeat(adv_r[idx], N))
            surr = tape.minimum(
                tape.mul(ratio, adv_c),
                tape.mul(
                    tape.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), adv_c
                ),
            )
            pol_loss = tape.neg(tape.mean(surr))
            ent = entropy_mean(tape, alogits)
            loss = tape.sub(pol_loss, tape.scale(ent, cfg.ent_coef))
            if not np.isfinite(loss.data):
                raise NonFiniteError(
                    f"policy loss became {loss.data!r} "
                    f"(policy_loss={pol_loss.data!r}, entropy={ent.data!r})"
                )
            pstore.zero_grads()
            tape.backward(loss)
            adam_step(pstore, lr=cfg.lr)

            # --- value step (separate store, never mixes with policy) ---
            tape2 = Tape()
            v = vnet.forward(vstore, tape2, Tensor(obs_r[idx].reshape(m, N * D)))
            vold = tape2.constant(vold_r[idx].reshape(m, 1))
            ret = tape2.constant(ret_r[idx].reshape(m, 1))
            vclip = tape2.add(
                vold, tape2.clip(tape2.sub(v, vold), -cfg.vf_clip, cfg.vf_clip)
            )
            verr = tape2.maximum(
                tape2.square(tape2.sub(v, ret)), tape2.square(tape2.sub(vclip, ret))
            )
            vloss = tape2.scale(tape2.mean(verr), cfg.vf_coef)
            if not np.isfinite(vloss.data):
                raise NonFiniteError(f"value loss became {vloss.data!r}")
            vstore.zero_grads()
            tape2.backward(vloss)
            adam_step(vstore, lr=cfg.lr)

            stats["policy_loss"] += float(pol_loss.data)
            stats["value_loss"] += float(vloss.data)
            stats["entropy"] += float(ent.data)
            n_mb += 1

    return {k: v / n_mb for k, v in stats.items()}


def write_curve(path: str | Path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CURVE_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in CURVE_FIELDS})


def community_tag(env: str, seed: int, iteration: int) -> str:
    return f"community-{env}-{seed}-iter{iteration}"


def save_community(
    out_dir: str | Path,
    tag: str,
    pstore: ParamStore,
    vstore: ParamStore,
    meta: dict,
) -> Path:
    out_dir = Path(out_dir)
    save_store(out_dir / f"{tag}.policy.ckpt", pstore, meta={**meta, "part": "policy"})
    save_store(out_dir / f"{tag}.value.ckpt", vstore, meta={**meta, "part": "value"})
    return out_dir / f"{tag}.policy.ckpt"


def load_community(policy_ckpt: str | Path):
    """Load a saved community. Returns (policy, pstore, meta)."""
    pstore, meta = load_store(policy_ckpt)
    policy = PolicyNet(
        obs_dim=int(meta["obs_dim"]),
        n_actions=int(meta["n_actions"]),
        alphabet=int(meta["alphabet"]),
        in_degree=int(meta["in_degree"]),
    )
    return policy, pstore, meta


def train_community(
    env_cfg,
    cfg: MappoConfig,
    seed: int,
    out_dir: str | Path,
) -> tuple[ParamStore, ParamStore, list[dict]]:
    """Train one community; writes curve.csv and checkpoints under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_agents = env_cfg.n_agents
    topology = ChannelTopology.ring(n_agents)

    if isinstance(env_cfg, GridworldConfig):
        n_actions = 5
    else:
        n_actions = 3
    policy = PolicyNet(env_cfg.obs_dim, n_actions, cfg.alphabet, in_degree=1)
    vnet = CentralValueNet(n_agents * env_cfg.obs_dim)
    pstore, vstore = ParamStore(), ParamStore()
    policy.init_params(pstore, np.random.default_rng([seed, 0]))
    vnet.init_params(vstore, np.random.default_rng([seed, 1]))

    env_batch = make_env_batch(env_cfg, cfg.n_envs, base_seed=seed * 10_000_019)
    meta = {
        "env": cfg.env,
        "seed": seed,
        "obs_dim": env_cfg.obs_dim,
        "private_dim": 19 if isinstance(env_cfg, GridworldConfig) else 8,
        "n_actions": n_actions,
        "n_agents": n_agents,
        "alphabet": cfg.alphabet,
        "in_degree": 1,
        "temperature": cfg.temperature,
    }

    curve: list[dict] = []
    last_mean = float("nan")
    for it in range(1, cfg.iterations + 1):
        batch = collect_rollout(
            env_batch, policy, pstore, vnet, vstore, topology, cfg,
            np.random.default_rng([seed, 2, it]),
        )
        batch.advantages, batch.returns = compute_gae(
            batch.rewards, batch.values, batch.dones, batch.bootstrap_value,
            cfg.gamma, cfg.lam,
        )
        good = (pstore.snapshot(), vstore.snapshot(),
                pstore.step_count, vstore.step_count)
        try:
            stats = ppo_update(
                policy, vnet, pstore, vstore, topology, batch, cfg,
                np.random.default_rng([seed, 3, it]),
            )
        except NonFiniteError as e:
            pstore.load_state(good[0])
            vstore.load_state(good[1])
            pstore.step_count, vstore.step_count = good[2], good[3]
            tag = community_tag(cfg.env, seed, it - 1) + "-aborted"
            ckpt = save_community(out_dir, tag, pstore, vstore, meta)
            write_curve(out_dir / "curve.csv", curve)
            raise DivergenceError(
                f"training diverged at iteration {it}: {e}; "
                f"last good parameters saved to {ckpt}",
                checkpoint=ckpt,
            ) from e

        if batch.episode_returns:
            last_mean = float(np.mean(batch.episode_returns))
        curve.append(
            {
                "iteration": it,
                "steps": it * cfg.batch_steps,
                "mean_reward": last_mean,
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "entropy": stats["entropy"],
            }
        )
        if cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            save_community(out_dir, community_tag(cfg.env, seed, it), pstore, vstore, meta)
        if cfg.target_reward is not None and len(curve) >= cfg.target_window:
            window = [r["mean_reward"] for r in curve[-cfg.target_window :]]
            if float(np.mean(window)) >= cfg.target_reward:
                break

    final_it = curve[-1]["iteration"] if curve else 0
    save_community(out_dir, community_tag(cfg.env, seed, final_it), pstore, vstore, meta)
    write_curve(out_dir / "curve.csv", curve)
    return pstore, vstore, curve
