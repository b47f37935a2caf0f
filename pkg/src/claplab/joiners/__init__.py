"""Joiner construction: imitation and protocol-translation agents, plus the
on-disk bundle format tying a trained joiner to its provenance."""

from __future__ import annotations

import json
from pathlib import Path

from ..mappo.nets import PolicyNet
from ..ndiff import Mlp, MlpSpec, ParamStore, load_store, save_store
from .ectl import (
    EctlJoiner,
    label_ec_messages,
    train_ectl,
    train_listen_translator,
    train_signal_translator,
)
from .il import IlJoiner, make_il_nets, train_il
from .supervised import FitResult, fit_classifier, split_records_by_episode

__all__ = [
    "EctlJoiner",
    "FitResult",
    "IlJoiner",
    "fit_classifier",
    "label_ec_messages",
    "load_joiner",
    "make_il_nets",
    "save_joiner",
    "split_records_by_episode",
    "train_ectl",
    "train_il",
    "train_listen_translator",
    "train_signal_translator",
]

MANIFEST_NAME = "manifest.json"


def _save_mlp(path: Path, net: Mlp, store: ParamStore) -> None:
    save_store(
        path,
        store,
        meta={
            "name": net.name,
            "input_dim": net.spec.input_dim,
            "hidden": list(net.spec.hidden_sizes),
            "output_dim": net.spec.output_dim,
        },
    )


def _load_mlp(path: Path) -> tuple[Mlp, ParamStore]:
    store, meta = load_store(path)
    net = Mlp(
        meta["name"],
        MlpSpec(int(meta["input_dim"]), tuple(meta["hidden"]), int(meta["output_dim"])),
    )
    return net, store


def save_joiner(
    joiner,
    out_dir: str | Path,
    dataset_sha256: str = "",
    env_name: str = "",
    target_agent: int = -1,
    ec_checkpoint: str = "",
) -> Path:
    """Write a self-contained joiner bundle directory; returns its path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "env": env_name,
        "target_agent": target_agent,
        "dataset_sha256": dataset_sha256,
        "alphabet": joiner.alphabet,
    }
    if isinstance(joiner, IlJoiner):
        manifest.update({"kind": "il", "n_actions": joiner.n_actions})
        _save_mlp(out_dir / "pi_c.ckpt", joiner.comm_net, joiner.comm_store)
        _save_mlp(out_dir / "pi_e.ckpt", joiner.act_net, joiner.act_store)
    elif isinstance(joiner, EctlJoiner):
        manifest.update(
            {
                "kind": "ectl",
                "ec_alphabet": joiner.ec_alphabet,
                "n_agents": joiner.n_agents,
                "include_ids": joiner.include_ids,
                "speak_to": joiner.speak_to,
                "listen_from": joiner.listen_from,
                "ec_checkpoint": ec_checkpoint,
            }
        )
        _save_mlp(out_dir / "tau_s.ckpt", joiner.tau_s, joiner.tau_s_store)
        _save_mlp(out_dir / "tau_r.ckpt", joiner.tau_r, joiner.tau_r_store)
        p = joiner.ec_policy
        save_store(
            out_dir / "ec_policy.ckpt",
            joiner.ec_store,
            meta={
                "part": "policy",
                "obs_dim": p.obs_dim,
                "n_actions": p.n_actions,
                "alphabet": p.alphabet,
                "in_degree": p.in_degree,
            },
        )
    else:
        raise TypeError(f"not a saveable joiner: {type(joiner).__name__}")
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out_dir


def load_joiner(bundle_dir: str | Path):
    """Reconstruct a saved joiner. Returns (joiner, manifest)."""
    bundle_dir = Path(bundle_dir)
    manifest = json.loads((bundle_dir / MANIFEST_NAME).read_text())
    kind = manifest.get("kind")
    if kind == "il":
        comm_net, comm_store = _load_mlp(bundle_dir / "pi_c.ckpt")
        act_net, act_store = _load_mlp(bundle_dir / "pi_e.ckpt")
        joiner = IlJoiner(
            comm_net, comm_store, act_net, act_store,
            alphabet=int(manifest["alphabet"]),
            n_actions=int(manifest["n_actions"]),
        )
    elif kind == "ectl":
        tau_s, s_store = _load_mlp(bundle_dir / "tau_s.ckpt")
        tau_r, r_store = _load_mlp(bundle_dir / "tau_r.ckpt")
        ec_store, meta = load_store(bundle_dir / "ec_policy.ckpt")
        ec_policy = PolicyNet(
            obs_dim=int(meta["obs_dim"]),
            n_actions=int(meta["n_actions"]),
            alphabet=int(meta["alphabet"]),
            in_degree=int(meta["in_degree"]),
        )
        joiner = EctlJoiner(
            ec_policy=ec_policy,
            ec_store=ec_store,
            tau_s=tau_s,
            tau_s_store=s_store,
            tau_r=tau_r,
            tau_r_store=r_store,
            alphabet=int(manifest["alphabet"]),
            ec_alphabet=int(manifest["ec_alphabet"]),
            n_agents=int(manifest["n_agents"]),
            include_ids=bool(manifest["include_ids"]),
            speak_to=int(manifest["speak_to"]),
            listen_from=int(manifest["listen_from"]),
        )
    else:
        raise ValueError(f"{bundle_dir}: unknown joiner kind {kind!r}")
    return joiner, manifest
