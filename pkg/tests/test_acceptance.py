"""End-to-end gate for the shipped pipeline.

One test per headline claim, each against pinned seeds and pinned
thresholds.  The two session-scoped community fixtures are the dominant
cost (~15 minutes each on one CPU core with the shipped preset); every
other test reuses them.  Everything downstream is deterministic: a rerun
reproduces the same rewards bit for bit.

Budgets asserted here (gradient checks under a minute, channel ablations
under two hours including community training, replacement parity under an
hour after community training) are generous on a desktop CPU; they exist
to catch order-of-magnitude regressions, not to race the clock.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from claplab.cli import EXIT_OK, main
from claplab.core import ChannelTopology, one_hot, split_interactions
from claplab.datasets import (
    NO_ACTION,
    RawHumanRow,
    bias_filter_first_two_columns,
    collect_interactions,
    write_human_rows,
)
from claplab.envs import (
    GRID_PRIVATE_DIM,
    N_GOAL_SLOTS,
    DrivingConfig,
    DrivingGame,
    DrivingState,
    Gridworld,
    GridworldBatch,
    GridworldConfig,
    GridworldState,
)
from claplab.evaluation import (
    EvalReport,
    blind_private_members,
    cis_separated,
    evaluate_team,
    normalized_reward,
    position_occupancy,
    positive_listening_probe,
    positive_signalling_probe,
    team_with_replacement,
)
from claplab.joiners import train_ectl, train_il
from claplab.mappo.trainer import MappoConfig, load_community, train_community
from claplab.team import CommunityMember, RandomMember

from synth import FAST_FIT, StubSpeaker, permuted_protocol_records

ROOT = Path(__file__).resolve().parents[1]

N_AGENTS = 3
ALPHABET = 5
N_ACTIONS = 5
TARGET = 0
TOPO = ChannelTopology.ring(N_AGENTS)
GRID = GridworldConfig(n_agents=N_AGENTS)

TARGET_COMMUNITY_SEED = 0
EC_COMMUNITY_SEED = 2

EVAL_EPISODES = 500
PARITY_TRIALS = 3
BASELINE_SEED = 900_000_000
EVAL_SEED = 500_000_000
FIT_SEED = 11

# The shipped fit recipe (mirrors the [train-joiner] defaults in
# claplab.runconfig): small minibatches with a patient early stop, sized
# for the few hundred rows a replacement collection actually yields.
JOINER_FIT = dict(lr=3e-3, minibatch=128, weight_decay=1e-5,
                  max_epochs=4000, patience=250)
IL_HIDDEN = (384, 384)


# ------------------------------------------------------------------ fixtures


@pytest.fixture(scope="session")
def communities(tmp_path_factory):
    """Two independently seeded communities trained with the shipped preset."""
    root = tmp_path_factory.mktemp("communities")
    built = {}
    for name, seed in (("target", TARGET_COMMUNITY_SEED),
                       ("ec", EC_COMMUNITY_SEED)):
        out = root / name
        t0 = time.monotonic()
        train_community(GRID, MappoConfig.for_gridworld(), seed=seed,
                        out_dir=out)
        seconds = time.monotonic() - t0
        ckpts = list(out.glob("*.policy.ckpt"))
        assert len(ckpts) == 1
        policy, store, _ = load_community(ckpts[0])
        built[name] = {"policy": policy, "store": store, "seconds": seconds}
    return built


@pytest.fixture(scope="session")
def team(communities):
    member = CommunityMember(policy=communities["target"]["policy"],
                             store=communities["target"]["store"],
                             private_dim=GRID_PRIVATE_DIM)
    return [member] * N_AGENTS


@pytest.fixture(scope="session")
def baselines(team):
    orig = evaluate_team(GRID, team, TOPO, ALPHABET, EVAL_EPISODES,
                         base_seed=BASELINE_SEED)
    rand_team = team_with_replacement(
        team, TARGET, RandomMember(N_ACTIONS, ALPHABET, seed=5))
    rand = evaluate_team(GRID, rand_team, TOPO, ALPHABET, EVAL_EPISODES,
                         base_seed=BASELINE_SEED)
    assert orig.mean > rand.mean
    return {"orig": orig, "rand": rand}


def _pooled(reward_chunks) -> EvalReport:
    rewards = np.concatenate(reward_chunks)
    ci = 1.96 * rewards.std(ddof=1) / math.sqrt(len(rewards))
    return EvalReport(n_episodes=len(rewards), mean=float(rewards.mean()),
                      ci95=float(ci), rewards=rewards)


def _joiner_cell(team, method, ec, n_collect, *, biased=False):
    """Collect -> fit -> evaluate, pooled over paired trials."""
    chunks = []
    for trial in range(PARITY_TRIALS):
        ds = collect_interactions(
            GRID, team, TOPO, ALPHABET, target_agent=TARGET,
            n_episodes=n_collect,
            base_seed=1_000_000 * (trial + 1) + 1000 * n_collect)
        if biased:
            ds = bias_filter_first_two_columns(ds)
        sig, lis = split_interactions(ds.records, TARGET)
        if method == "il":
            joiner, _, _ = train_il(sig, lis, GRID.obs_dim, ALPHABET,
                                    N_ACTIONS, seed=FIT_SEED,
                                    hidden=IL_HIDDEN, **JOINER_FIT)
        else:
            joiner, _, _ = train_ectl(sig, lis, ec["policy"], ec["store"],
                                      alphabet=ALPHABET, n_agents=N_AGENTS,
                                      seed=FIT_SEED, **JOINER_FIT)
        rep = evaluate_team(GRID, team_with_replacement(team, TARGET, joiner),
                            TOPO, ALPHABET, EVAL_EPISODES,
                            base_seed=EVAL_SEED + 1_000_000 * trial)
        chunks.append(rep.rewards)
    return _pooled(chunks)


# ------------------------------------------------------- numerical kernel


def test_gradient_checks_are_tight_and_fast():
    t0 = time.monotonic()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "tests/test_ndiff.py", "-q",
         "-p", "no:cacheprovider"],
        cwd=ROOT, capture_output=True, text=True)
    elapsed = time.monotonic() - t0
    assert proc.returncode == 0, proc.stdout[-2000:] + proc.stderr[-2000:]
    assert elapsed < 60.0, f"gradient checks took {elapsed:.1f}s"


# ------------------------------------------------------ environment pinning


def test_environment_constants_pinned():
    grid = GridworldConfig()
    assert (grid.width, grid.height) == (5, 5)
    assert grid.horizon == 10

    batch = GridworldBatch(GridworldConfig(n_agents=3), n_envs=4000,
                           base_seed=7)
    for i in range(3):
        true_goal = batch.goals[:, (i + 1) % 3, :]
        cheb = np.abs(batch.guesses[:, i, :] - true_goal).max(axis=-1)
        assert cheb.max() <= 1  # close guesses stay within one tile

    env = Gridworld(GridworldConfig(n_agents=2))
    state = GridworldState(positions=((1, 2), (0, 0)),
                           goals=((2, 2), (4, 4)),
                           close_guesses=((0, 0), (0, 0)),
                           reached=(False, False), t=0)
    state, reward, _ = env.step(state, (3, 4))
    assert reward == 1.0 - 1.0   # +1 for reaching, -1 for the straggler
    state, reward, _ = env.step(state, (4, 4))
    assert reward == -1.0        # a reached agent contributes 0

    drive = DrivingConfig()
    assert (drive.alpha, drive.c_time, drive.r_goal) == (200.0, 0.1, 500.0)
    assert drive.turn_angle == pytest.approx(math.pi / 8)
    assert drive.dt == pytest.approx(0.2)
    assert drive.horizon == 200
    assert len(drive.goal_slots) == N_GOAL_SLOTS == 8

    def fresh_state(pos, speed, pit_cfg):
        goal = pit_cfg.goal_slots[0]
        return DrivingState(
            positions=(pos, (4.5, 0.0)), prev_positions=(pos, (4.5, 0.0)),
            headings=(0.0, math.pi), speeds=(speed, 0.0), goal_slots=(0, 4),
            min_goal_distance=(math.dist(pos, goal), 8.5),
            reached=(False, False), t=0)

    free = DrivingConfig(pit_enabled=False)
    env = DrivingGame(free)
    state, (r0, _), _ = env.step(fresh_state((0.0, 0.0), 2.3, free), (2, 2))
    assert state.positions[0] == pytest.approx((0.5, 0.0))
    assert r0 == pytest.approx(200 * 0.5 - 0.1)  # alpha * progress - c_time

    pit_cfg = DrivingConfig(pit_enabled=True)
    env = DrivingGame(pit_cfg)
    before = fresh_state((-0.5, 0.0), 2.0, pit_cfg)
    after, (r0, _), _ = env.step(before, (2, 0))
    assert math.dist(after.positions[0], pit_cfg.pit_center) < pit_cfg.pit_radius
    assert r0 == pytest.approx(-pit_cfg.c_pit - pit_cfg.c_time)
    assert after.min_goal_distance[0] < before.min_goal_distance[0]


# --------------------------------------------------- channel use (ablation)


def test_trained_community_relies_on_its_channel(communities, team, baselines):
    t0 = time.monotonic()
    orig = baselines["orig"]
    blocked = evaluate_team(GRID, team, TOPO, ALPHABET, EVAL_EPISODES,
                            base_seed=BASELINE_SEED, block_comm=True)
    blind = evaluate_team(GRID, blind_private_members(team), TOPO, ALPHABET,
                          EVAL_EPISODES, base_seed=BASELINE_SEED)
    assert orig.mean > blocked.mean and cis_separated(orig, blocked)
    assert orig.mean > blind.mean and cis_separated(orig, blind)

    speak = positive_signalling_probe(GRID, team, TOPO, ALPHABET,
                                      speaker=0, n_episodes=EVAL_EPISODES,
                                      base_seed=700_000_000)
    listen = positive_listening_probe(GRID, team, TOPO, ALPHABET,
                                      listener=0, n_episodes=EVAL_EPISODES,
                                      base_seed=710_000_000)
    assert speak.z > 3.0
    assert listen.z > 3.0

    spent = communities["target"]["seconds"] + (time.monotonic() - t0)
    assert spent < 7200, f"channel-use check took {spent:.0f}s with training"


# ------------------------------------------------------- replacement parity


def test_joiner_parity_with_full_data(communities, team, baselines):
    t0 = time.monotonic()
    il = _joiner_cell(team, "il", None, 100)
    ectl = _joiner_cell(team, "ectl", communities["ec"], 100)
    il_norm = normalized_reward(il, baselines["orig"], baselines["rand"])
    ectl_norm = normalized_reward(ectl, baselines["orig"], baselines["rand"])
    assert il_norm.value >= 0.90, f"IL normalized reward {il_norm.value:.3f}"
    assert ectl_norm.value >= 0.90, f"ECTL normalized reward {ectl_norm.value:.3f}"
    assert time.monotonic() - t0 < 3600


def test_joiner_parity_with_biased_data(communities, team, baselines):
    il = _joiner_cell(team, "il", None, 100, biased=True)
    ectl = _joiner_cell(team, "ectl", communities["ec"], 100, biased=True)
    ectl_norm = normalized_reward(ectl, baselines["orig"], baselines["rand"])
    assert ectl_norm.value >= 0.90, f"ECTL normalized reward {ectl_norm.value:.3f}"
    assert il.mean < ectl.mean and cis_separated(il, ectl)


def test_translation_beats_imitation_when_data_scarce(communities, team,
                                                      baselines):
    il = _joiner_cell(team, "il", None, 5)
    ectl = _joiner_cell(team, "ectl", communities["ec"], 5)
    assert ectl.mean > il.mean and cis_separated(ectl, il)


# ------------------------------------------------------ translation oracle


@pytest.mark.parametrize("alphabet", [3, 5, 16])
def test_translators_recover_symbol_permutations(alphabet):
    rows = 1500 if alphabet <= 5 else 3000
    for t in range(20):
        perm = np.random.default_rng(1000 + t).permutation(alphabet)
        stub = StubSpeaker(alphabet=alphabet)
        sig, lis = permuted_protocol_records(stub, perm, rows, seed=100 + t)
        joiner, _, _ = train_ectl(sig, lis, stub, None, alphabet=alphabet,
                                  n_agents=3, seed=t, **FAST_FIT)
        held_sig, held_lis = permuted_protocol_records(stub, perm, 500,
                                                       seed=7000 + t)
        obs_s = np.stack([r.speaker_obs.full for r in held_sig])
        speak_acc = (joiner.speak(obs_s) == perm[stub.symbol(obs_s)]).mean()
        assert speak_acc >= 0.99, f"perm {t}: outgoing accuracy {speak_acc:.3f}"

        obs_r = np.stack([r.receiver_obs.full for r in held_lis])
        native = stub.symbol(np.stack([r.speaker_obs.full for r in held_lis]))
        incoming = one_hot(perm[native], alphabet)
        act_acc = (joiner.act(obs_r, incoming)
                   == stub.action_np(obs_r, native)).mean()
        assert act_acc >= 0.99, f"perm {t}: incoming accuracy {act_acc:.3f}"


def test_self_translation_preserves_team_reward(communities, team, baselines):
    target = communities["target"]
    ds = collect_interactions(GRID, team, TOPO, ALPHABET,
                              target_agent=TARGET, n_episodes=100,
                              base_seed=1_100_000)
    sig, lis = split_interactions(ds.records, TARGET)
    joiner, _, _ = train_ectl(sig, lis, target["policy"], target["store"],
                              alphabet=ALPHABET, n_agents=N_AGENTS,
                              seed=FIT_SEED, **JOINER_FIT)
    rep = evaluate_team(GRID, team_with_replacement(team, TARGET, joiner),
                        TOPO, ALPHABET, EVAL_EPISODES, base_seed=EVAL_SEED)
    orig = baselines["orig"]
    assert abs(rep.mean - orig.mean) <= rep.ci95 + orig.ci95


# ----------------------------------------------------------- replayability


REPLAY_CFG = """\
[common]
seed = 3

[train-community]
iterations = 4
batch_steps = 200
n_envs = 20
minibatch = 256
sgd_iters = 2

[collect]
n_episodes = 6

[train-joiner]
il_hidden = 32
translator_hidden = 32,32
max_epochs = 30
patience = 10
minibatch = 256

[evaluate]
n_episodes = 12

[sweep]
n_collect_list = 3
methods = il
trials = 1
n_episodes = 8
"""


def _tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def _replays(make_argv, base: Path) -> Path:
    """Run a command twice into sibling dirs; its artifacts must match."""
    trees = []
    for rep in ("a", "b"):
        out = base / rep
        assert main(make_argv(str(out))) == EXIT_OK
        trees.append(_tree_bytes(out))
    assert sorted(trees[0]) == sorted(trees[1])
    mismatched = [name for name in trees[0] if trees[0][name] != trees[1][name]]
    assert not mismatched, f"artifacts differ on replay: {mismatched}"
    return base / "a"


def test_runs_replay_bit_identically(tmp_path):
    cfg_path = tmp_path / "fast.ini"
    cfg_path.write_text(REPLAY_CFG)
    cfg = ["--config", str(cfg_path)]

    community = _replays(
        lambda out: ["train-community", *cfg, "--out", out],
        tmp_path / "community")

    data_dir = _replays(
        lambda out: ["collect", *cfg, "--community", str(community),
                     "--out", out],
        tmp_path / "data")
    data = str(data_dir / "interactions.jsonl")

    joiner = _replays(
        lambda out: ["train-joiner", "ectl", *cfg, "--data", data,
                     "--ec-community", str(community), "--out", out],
        tmp_path / "joiner")

    report_dir = _replays(
        lambda out: ["evaluate", *cfg, "--community", str(community),
                     "--joiner", str(joiner), "--out", out],
        tmp_path / "eval")

    _replays(
        lambda out: ["sweep", *cfg, "--community", str(community),
                     "--ec-community", str(community), "--out", out],
        tmp_path / "sweep")

    _replays(
        lambda out: ["plot", str(report_dir / "report.json"),
                     "--kind", "bars", "--out", out],
        tmp_path / "plot")

    rows = []
    rng = np.random.default_rng(3)
    for episode in range(2):
        for t in range(5):
            rows.append(RawHumanRow(
                t=t, obs1=rng.normal(size=22), obs2=rng.normal(size=22),
                act1=int(rng.integers(0, 3)),
                act2=NO_ACTION if t % 2 else int(rng.integers(0, 3))))
    human = tmp_path / "session.rows.jsonl"
    write_human_rows(rows, human)
    _replays(
        lambda out: ["augment-human", "--data", str(human), "--out", out],
        tmp_path / "augment")


# ------------------------------------------------- pit transfer (nightly)


@pytest.mark.nightly
def test_pit_avoidance_transfers(tmp_path_factory):
    """Joining a pit-avoiding driving community: translation keeps avoiding
    the pit, imitation strays into it once observations leave the data
    distribution.  Reduced scale (horizon 100, fifth-size batches); runs
    from the nightly lane."""
    root = tmp_path_factory.mktemp("pit")
    env_cfg = DrivingConfig(pit_enabled=True, horizon=100)
    preset = MappoConfig.for_driving(batch_steps=40_000, iterations=60)
    topo = ChannelTopology.ring(2)
    alphabet = preset.alphabet

    built = {}
    for name, seed in (("target", 10), ("ec", 11)):
        out = root / name
        train_community(env_cfg, preset, seed=seed, out_dir=out)
        ckpt = next(iter(out.glob("*.policy.ckpt")))
        policy, store, _ = load_community(ckpt)
        built[name] = (policy, store)

    private_dim = DrivingGame(env_cfg).private_dim
    team = [CommunityMember(policy=built["target"][0],
                            store=built["target"][1],
                            private_dim=private_dim)] * 2

    # The experts must avoid the pit for the premise to hold.
    occ = position_occupancy(env_cfg, team, topo, alphabet,
                             n_episodes=200, base_seed=42)
    half = occ.shape[0] // 2
    quarter = occ.shape[0] // 4
    pit_zone = occ[half - quarter // 2:half + quarter // 2,
                   half - quarter // 2:half + quarter // 2]
    assert pit_zone.sum() / occ.sum() < 0.02

    ds = collect_interactions(env_cfg, team, topo, alphabet, target_agent=0,
                              n_episodes=100, base_seed=1_100_000)
    sig, lis = split_interactions(ds.records, 0)
    il, _, _ = train_il(sig, lis, env_cfg.obs_dim, alphabet, 3,
                        seed=FIT_SEED, hidden=IL_HIDDEN, **JOINER_FIT)
    ectl, _, _ = train_ectl(sig, lis, *built["ec"], alphabet=alphabet,
                            n_agents=2, seed=FIT_SEED, **JOINER_FIT)

    il_rep = evaluate_team(env_cfg, team_with_replacement(team, 0, il),
                           topo, alphabet, EVAL_EPISODES, base_seed=EVAL_SEED)
    ectl_rep = evaluate_team(env_cfg, team_with_replacement(team, 0, ectl),
                             topo, alphabet, EVAL_EPISODES,
                             base_seed=EVAL_SEED)
    assert ectl_rep.mean > il_rep.mean and cis_separated(ectl_rep, il_rep)
