import numpy as np
import pytest

from claplab.core import InteractionRecord, ObservationSplit, one_hot
from claplab.joiners import (
    EctlJoiner,
    label_ec_messages,
    load_joiner,
    save_joiner,
    train_ectl,
    train_il,
)
from claplab.joiners.supervised import fit_classifier, split_records_by_episode
from claplab.mappo.nets import PolicyNet
from claplab.ndiff import Mlp, MlpSpec, ParamStore, save_store

from synth import FAST_FIT, StubSpeaker, permuted_protocol_records


def _margin_uniform(rng, buckets):
    """A value in [0,1) whose bucket index is unambiguous (stays away from
    the bucket boundaries), so 99%+ held-out accuracy is attainable."""
    return (rng.integers(0, buckets) + rng.uniform(0.1, 0.9)) / buckets


def make_records(n, obs_dim=8, alphabet=4, n_actions=5, n_episodes=20, seed=0):
    """Synthetic teacher: message = bucket of obs[0]; action = message,
    shifted by one when obs[1] crosses 1/2 (depends jointly on both)."""
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        o_s = rng.uniform(0, 1, obs_dim).astype(np.float32)
        o_r = rng.uniform(0, 1, obs_dim).astype(np.float32)
        o_s[0] = _margin_uniform(rng, alphabet)
        o_r[1] = _margin_uniform(rng, 2)
        m = min(int(o_s[0] * alphabet), alphabet - 1)
        a = (m + (o_r[1] >= 0.5)) % n_actions
        recs.append(
            InteractionRecord(
                step=i, speaker_id=0, receiver_id=1,
                speaker_obs=ObservationSplit.from_full(o_s, 2),
                message=m,
                receiver_obs=ObservationSplit.from_full(o_r, 2),
                receiver_action=a,
                episode=int(i * n_episodes / n),
            )
        )
    return recs


# ----------------------------------------------------------- split + fitting

def test_split_by_episode_no_leakage():
    recs = make_records(500, n_episodes=30)
    tr, va = split_records_by_episode(recs, np.random.default_rng(0))
    assert len(tr) + len(va) == 500 and va
    assert {r.episode for r in tr}.isdisjoint({r.episode for r in va})
    # ~10% of episodes held out
    assert len({r.episode for r in va}) == 3


def test_split_single_episode_has_no_val():
    recs = make_records(20, n_episodes=1)
    tr, va = split_records_by_episode(recs, np.random.default_rng(0))
    assert len(tr) == 20 and va == []
    with pytest.raises(ValueError):
        split_records_by_episode([], np.random.default_rng(0))


def test_fit_memorizes_single_example():
    net = Mlp("probe", MlpSpec(4, (16,), 3))
    store = ParamStore()
    rng = np.random.default_rng(0)
    net.init_params(store, rng)
    X = np.array([[0.5, -0.2, 0.1, 0.9]])
    y = np.array([2])
    fit = fit_classifier(net, store, X, y, rng, lr=0.05, max_epochs=300)
    assert fit.train_loss < 1e-3
    assert net.forward_np(store, X).argmax(-1)[0] == 2


def test_fit_constant_label():
    rng = np.random.default_rng(1)
    net = Mlp("probe", MlpSpec(4, (16,), 3))
    store = ParamStore()
    net.init_params(store, rng)
    X = rng.normal(size=(64, 4))
    y = np.ones(64, dtype=np.int64)
    fit_classifier(net, store, X, y, rng, lr=0.05, max_epochs=200)
    assert (net.forward_np(store, rng.normal(size=(32, 4))).argmax(-1) == 1).all()


def test_fit_early_stops_and_restores_best():
    rng = np.random.default_rng(2)
    net = Mlp("probe", MlpSpec(3, (32,), 2))
    store = ParamStore()
    net.init_params(store, rng)
    # labels pure noise -> val loss can only get worse once it overfits
    X = rng.normal(size=(120, 3))
    y = rng.integers(0, 2, 120)
    Xv = rng.normal(size=(40, 3))
    yv = rng.integers(0, 2, 40)
    fit = fit_classifier(
        net, store, X, y, rng, Xv, yv, lr=0.05, max_epochs=1500, patience=10
    )
    assert fit.epochs_run < 1500
    from claplab.ndiff import cce_loss_np

    assert cce_loss_np(net.forward_np(store, Xv), yv) == pytest.approx(fit.val_loss)


# ----------------------------------------------------------------- IL oracle

def test_il_learns_synthetic_teacher():
    recs = make_records(2000)
    held = make_records(400, seed=99)
    joiner, fit_c, fit_a = train_il(
        recs, recs, obs_dim=8, alphabet=4, n_actions=5, seed=0,
        lr=5e-3, minibatch=256, max_epochs=500, patience=80,
    )
    obs_s = np.stack([r.speaker_obs.full for r in held])
    want_m = np.array([r.message for r in held])
    assert (joiner.speak(obs_s) == want_m).mean() >= 0.99
    obs_r = np.stack([r.receiver_obs.full for r in held])
    inc = one_hot(want_m, 4)
    want_a = np.array([r.receiver_action for r in held])
    assert (joiner.act(obs_r, inc) == want_a).mean() >= 0.99
    assert fit_c.val_loss is not None and fit_a.val_loss is not None


def test_il_rejects_empty_sets():
    recs = make_records(10)
    with pytest.raises(ValueError, match="non-empty"):
        train_il([], recs, 8, 4, 5)
    with pytest.raises(ValueError, match="non-empty"):
        train_il(recs, [], 8, 4, 5)


# --------------------------------------------------------------- ECTL oracle

def test_label_ec_messages_speaker_only():
    stub = StubSpeaker(alphabet=5)
    recs = make_records(50, alphabet=5)
    labels = label_ec_messages(recs, stub, None)
    obs_s = np.stack([r.speaker_obs.full for r in recs])
    np.testing.assert_array_equal(labels, stub.symbol(obs_s))
    assert label_ec_messages([], stub, None).shape == (0,)


def test_translators_recover_permutation():
    stub = StubSpeaker(alphabet=5)
    perm = np.array([3, 0, 4, 1, 2])
    sig, lis = permuted_protocol_records(stub, perm, 1500, seed=4)
    joiner, fit_s, fit_r = train_ectl(
        sig, lis, stub, None, alphabet=5, n_agents=3, seed=1, **FAST_FIT
    )
    held_sig, held_lis = permuted_protocol_records(stub, perm, 400, seed=77)
    obs_s = np.stack([r.speaker_obs.full for r in held_sig])
    want = perm[stub.symbol(obs_s)]
    assert (joiner.speak(obs_s) == want).mean() >= 0.99
    # listening: scrambled incoming symbol leads to the same action the stub
    # would take on the native symbol
    obs_r = np.stack([r.receiver_obs.full for r in held_lis])
    native = stub.symbol(np.stack([r.speaker_obs.full for r in held_lis]))
    inc = one_hot(perm[native], 5)
    want_a = stub.action_np(obs_r, native)
    assert (joiner.act(obs_r, inc) == want_a).mean() >= 0.99


def test_translator_identity_protocol():
    stub = StubSpeaker(alphabet=4)
    sig, lis = permuted_protocol_records(stub, np.arange(4), 1200, seed=5)
    joiner, *_ = train_ectl(
        sig, lis, stub, None, alphabet=4, n_agents=2, seed=2, **FAST_FIT
    )
    held_sig, _ = permuted_protocol_records(stub, np.arange(4), 300, seed=88)
    obs_s = np.stack([r.speaker_obs.full for r in held_sig])
    assert (joiner.speak(obs_s) == stub.symbol(obs_s)).mean() >= 0.99


def test_ectl_rejects_wrong_incoming_width():
    stub = StubSpeaker(alphabet=4)
    sig, lis = permuted_protocol_records(stub, np.arange(4), 200, seed=6)
    joiner, *_ = train_ectl(
        sig, lis, stub, None, alphabet=4, n_agents=2,
        lr=5e-3, minibatch=256, max_epochs=5, patience=5,
    )
    with pytest.raises(ValueError, match="alphabet"):
        joiner.act(np.zeros((2, 6), dtype=np.float32), np.zeros((2, 7)))


def test_ec_params_frozen_bit_identical(tmp_path):
    ec = PolicyNet(obs_dim=6, n_actions=4, alphabet=5)
    ec_store = ParamStore()
    ec.init_params(ec_store, np.random.default_rng(0))
    before = tmp_path / "before.ckpt"
    save_store(before, ec_store)
    stub_free = permuted_protocol_records(StubSpeaker(5), np.arange(5), 300, seed=7)
    train_ectl(
        *stub_free, ec, ec_store, alphabet=5, n_agents=2,
        lr=5e-3, minibatch=256, max_epochs=10, patience=5,
    )
    after = tmp_path / "after.ckpt"
    save_store(after, ec_store)
    assert before.read_bytes() == after.read_bytes()


def test_ectl_empty_sets_rejected():
    stub = StubSpeaker(4)
    sig, lis = permuted_protocol_records(stub, np.arange(4), 50)
    with pytest.raises(ValueError, match="empty"):
        train_ectl([], lis, stub, None, alphabet=4, n_agents=2)
    with pytest.raises(ValueError, match="empty"):
        train_ectl(sig, [], stub, None, alphabet=4, n_agents=2)


# -------------------------------------------------------------- bundles

def test_il_bundle_roundtrip(tmp_path):
    recs = make_records(300)
    joiner, *_ = train_il(
        recs, recs, 8, 4, 5, seed=3, lr=5e-3, minibatch=256,
        max_epochs=20, patience=10,
    )
    out = save_joiner(
        joiner, tmp_path / "il", dataset_sha256="abc", env_name="gridworld",
        target_agent=1,
    )
    back, manifest = load_joiner(out)
    assert manifest["kind"] == "il" and manifest["dataset_sha256"] == "abc"
    obs = np.random.default_rng(0).uniform(0, 1, (40, 8)).astype(np.float32)
    np.testing.assert_array_equal(back.speak(obs), joiner.speak(obs))
    inc = one_hot(np.zeros(40, dtype=int), 4)
    np.testing.assert_array_equal(back.act(obs, inc), joiner.act(obs, inc))


def test_ectl_bundle_roundtrip(tmp_path):
    ec = PolicyNet(obs_dim=6, n_actions=4, alphabet=5)
    ec_store = ParamStore()
    ec.init_params(ec_store, np.random.default_rng(1))

    class RealStub(StubSpeaker):
        pass

    # train against the real PolicyNet so the bundle embeds a loadable copy
    sig, lis = permuted_protocol_records(StubSpeaker(5), np.arange(5), 400, seed=8)
    joiner, *_ = train_ectl(
        sig, lis, ec, ec_store, alphabet=5, n_agents=3,
        lr=5e-3, minibatch=256, max_epochs=10, patience=5,
    )
    out = save_joiner(
        joiner, tmp_path / "ectl", dataset_sha256="xyz", env_name="gridworld",
        target_agent=0, ec_checkpoint="community-gridworld-9-iter1.policy.ckpt",
    )
    back, manifest = load_joiner(out)
    assert isinstance(back, EctlJoiner)
    assert manifest["ec_checkpoint"].endswith("policy.ckpt")
    obs = np.random.default_rng(2).uniform(0, 1, (30, 6)).astype(np.float32)
    np.testing.assert_array_equal(back.speak(obs), joiner.speak(obs))
    inc = one_hot(np.ones(30, dtype=int), 5)
    np.testing.assert_array_equal(back.act(obs, inc), joiner.act(obs, inc))


def test_unknown_bundle_kind(tmp_path):
    (tmp_path / "manifest.json").write_text('{"kind": "zig"}')
    with pytest.raises(ValueError, match="unknown joiner kind"):
        load_joiner(tmp_path)
