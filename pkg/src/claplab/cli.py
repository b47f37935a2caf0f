"""Command-line entrypoint orchestrating the whole pipeline.

Subcommands: train-community, collect, train-joiner, evaluate, sweep,
plot, serve, augment-human. Exit codes: 0 success, 2 usage error,
3 refusal (existing output without --force), 4 data/schema error,
5 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import runconfig
from .core import (
    ChannelTopology,
    SchemaError,
    read_interactions,
    split_interactions,
    write_interactions,
)
from .datasets import (
    augment_human_data,
    bias_filter_first_two_columns,
    collect_interactions,
    dataset_fingerprint,
    read_human_rows,
)
from .envs import DrivingConfig, GridworldConfig
from .evaluation import (
    EvalReport,
    blind_private_members,
    check_team_compat,
    data_scaling_sweep,
    evaluate_team,
    normalized_reward,
    positive_listening_probe,
    positive_signalling_probe,
    team_with_replacement,
    welch_pvalue,
)
from .joiners import load_joiner, save_joiner, train_ectl, train_il
from .mappo import DivergenceError, MappoConfig, load_community, train_community
from .ndiff import CheckpointError, NonFiniteError
from .runconfig import ConfigError, int_list, str_list
from .team import CommunityMember, RandomMember

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_REFUSED = 3
EXIT_DATA = 4
EXIT_DIVERGED = 5


class Refusal(RuntimeError):
    """Would overwrite existing outputs; rerun with --force to allow."""


def _prepare_out(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required for this command")
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise Refusal(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def find_policy_checkpoint(path: str | Path) -> Path:
    """A community reference is either a .policy.ckpt file or a training
    output directory, in which case the highest-iteration checkpoint wins."""
    path = Path(path)
    if path.is_file():
        return path
    if not path.is_dir():
        raise FileNotFoundError(path)
    candidates = sorted(path.glob("*.policy.ckpt"))
    if not candidates:
        raise FileNotFoundError(f"no .policy.ckpt under {path}")

    def iteration(p: Path) -> tuple[int, int]:
        stem = p.name.removesuffix(".policy.ckpt")
        tag = stem.rsplit("iter", 1)
        aborted = stem.endswith("-aborted")
        try:
            it = int(tag[1].removesuffix("-aborted"))
        except (IndexError, ValueError):
            it = -1
        return (0 if aborted else 1, it)

    return max(candidates, key=iteration)


def _community_team(path: str | Path):
    """Load a community checkpoint and return (env_cfg, members, meta, ckpt)."""
    ckpt = find_policy_checkpoint(path)
    policy, store, meta = load_community(ckpt)
    n = int(meta["n_agents"])
    if meta["env"] == "gridworld":
        env_cfg = GridworldConfig(n_agents=n)
    else:
        env_cfg = DrivingConfig()
    member = CommunityMember(policy=policy, store=store,
                             private_dim=int(meta["private_dim"]))
    return env_cfg, [member] * n, meta, ckpt


def _fit_kwargs(params: dict) -> dict:
    return {
        k: params[k]
        for k in ("lr", "momentum", "weight_decay", "minibatch", "max_epochs",
                  "patience")
    }


# ------------------------------------------------------------------ commands


def cmd_train_community(args, params: dict) -> int:
    out = _prepare_out(args)
    if params["env"] == "gridworld":
        env_cfg = GridworldConfig(n_agents=params["n_agents"])
        mc = MappoConfig.for_gridworld()
    elif params["env"] == "driving":
        overrides = {"pit_enabled": params["pit_enabled"]}
        if params["horizon"]:
            overrides["horizon"] = params["horizon"]
        env_cfg = DrivingConfig(**overrides)
        mc = MappoConfig.for_driving()
    else:
        raise ConfigError(f"unknown env {params['env']!r}")
    from dataclasses import replace

    mc = replace(
        mc,
        alphabet=params["alphabet"],
        iterations=params["iterations"],
        batch_steps=params["batch_steps"],
        n_envs=params["n_envs"],
        minibatch=params["minibatch"],
        sgd_iters=params["sgd_iters"],
        lr=params["lr"],
        gamma=params["gamma"],
        lam=params["gae_lambda"],
        clip_eps=params["clip_eps"],
        vf_clip=params["vf_clip"],
        vf_coef=params["vf_coef"],
        ent_coef=params["ent_coef"],
        temperature=params["temperature"],
        checkpoint_every=params["checkpoint_every"],
    )
    train_community(env_cfg, mc, seed=params["seed"], out_dir=out)
    runconfig.write_run_artifacts(out, "train-community", params)
    print(f"community trained; checkpoints in {out}")
    return EXIT_OK


def cmd_collect(args, params: dict) -> int:
    out = _prepare_out(args)
    env_cfg, members, meta, ckpt = _community_team(args.community)
    topo = ChannelTopology.ring(int(meta["n_agents"]))
    ds = collect_interactions(
        env_cfg, members, topo, int(meta["alphabet"]),
        params["target_agent"], params["n_episodes"], params["seed"],
    )
    if params["bias_filter"]:
        ds = bias_filter_first_two_columns(ds)
    write_interactions(ds, out / "interactions.jsonl")
    runconfig.write_run_artifacts(
        out, "collect", params, inputs={"community": ckpt}
    )
    print(f"collected {len(ds.records)} records "
          f"({params['n_episodes']} episodes) -> {out / 'interactions.jsonl'}")
    return EXIT_OK


def cmd_train_joiner(args, params: dict) -> int:
    if args.method == "ectl" and not args.ec_community:
        raise ConfigError("train-joiner ectl requires --ec-community")
    out = _prepare_out(args)
    ds = read_interactions(args.data)
    sig, lis = split_interactions(ds.records, ds.target_agent)
    fit = _fit_kwargs(params)
    inputs: dict[str, Path] = {"data": Path(args.data)}
    ec_ckpt = ""
    if args.method == "il":
        joiner, fit_a, fit_b = train_il(
            sig, lis, ds.obs_dim, ds.alphabet_size, _n_actions(ds.env_name),
            seed=params["seed"], hidden=tuple(int_list(params["il_hidden"])),
            **fit,
        )
    else:
        ec_path = find_policy_checkpoint(args.ec_community)
        ec_policy, ec_store, ec_meta = load_community(ec_path)
        if int(ec_meta["obs_dim"]) != ds.obs_dim:
            raise SchemaError(
                f"pretrained-policy obs dim {ec_meta['obs_dim']} != dataset "
                f"obs dim {ds.obs_dim}"
            )
        joiner, fit_a, fit_b = train_ectl(
            sig, lis, ec_policy, ec_store, ds.alphabet_size, ds.n_agents,
            include_ids=params["include_ids"], seed=params["seed"],
            hidden=tuple(int_list(params["translator_hidden"])), **fit,
        )
        inputs["ec_community"] = ec_path
        ec_ckpt = str(ec_path)
    save_joiner(
        joiner, out, dataset_sha256=dataset_fingerprint(ds),
        env_name=ds.env_name, target_agent=ds.target_agent,
        ec_checkpoint=ec_ckpt,
    )
    metrics = {
        "method": args.method,
        "n_records": {"signalling": len(sig), "listening": len(lis)},
        "fits": [
            {"epochs_run": f.epochs_run, "best_epoch": f.best_epoch,
             "train_loss": f.train_loss, "val_loss": f.val_loss}
            for f in (fit_a, fit_b)
        ],
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    runconfig.write_run_artifacts(out, "train-joiner", params, inputs=inputs)
    print(f"{args.method} joiner trained on {len(ds.records)} records -> {out}")
    return EXIT_OK


def _n_actions(env_name: str) -> int:
    return {"gridworld": 5, "driving": 3}[env_name]


def cmd_evaluate(args, params: dict) -> int:
    out = _prepare_out(args)
    env_cfg, members, meta, ckpt = _community_team(args.community)
    n = int(meta["n_agents"])
    alphabet = int(meta["alphabet"])
    topo = ChannelTopology.ring(n)
    k = params["target_agent"]
    inputs: dict[str, Path] = {"community": ckpt}

    team = list(members)
    joiner_kind = None
    if args.joiner:
        joiner, manifest = load_joiner(args.joiner)
        joiner_kind = manifest["kind"]
        team = team_with_replacement(team, k, joiner)
        inputs["joiner"] = Path(args.joiner)
    if params["blind_private"]:
        team = blind_private_members(team)
    check_team_compat(env_cfg, team, topo, alphabet)

    rep = evaluate_team(
        env_cfg, team, topo, alphabet, params["n_episodes"], params["seed"],
        block_comm=params["block_comm"],
    )
    report = {
        "schema": "claplab-eval-report-v1",
        "env": meta["env"],
        "n_episodes": rep.n_episodes,
        "mean": rep.mean,
        "ci95": rep.ci95,
        "rewards": rep.rewards.tolist(),
        "target_agent": k,
        "ablation": {
            "block_comm": params["block_comm"],
            "blind_private": params["blind_private"],
        },
        "joiner": str(args.joiner) if args.joiner else None,
        "joiner_kind": joiner_kind,
    }
    if args.joiner:
        orig = evaluate_team(env_cfg, members, topo, alphabet,
                             params["n_episodes"], params["seed"])
        rand = evaluate_team(
            env_cfg,
            team_with_replacement(members, k,
                                  RandomMember(_n_actions(meta["env"]), alphabet,
                                               seed=params["seed"] + 5)),
            topo, alphabet, params["n_episodes"], params["seed"],
        )
        norm = normalized_reward(rep, orig, rand)
        report["baselines"] = {
            "original": {"mean": orig.mean, "ci95": orig.ci95},
            "random": {"mean": rand.mean, "ci95": rand.ci95},
        }
        report["normalized_mean"] = norm.value
        report["raw_ratio"] = norm.raw_ratio
        report["welch_p_vs_original"] = welch_pvalue(rep.rewards, orig.rewards)
    if params["probes"]:
        probes: dict = {}
        if meta["env"] == "gridworld":
            sig = positive_signalling_probe(
                env_cfg, members, topo, alphabet, k,
                n_episodes=params["n_episodes"], base_seed=params["seed"],
            )
            probes["signalling_mi"] = {
                "mi_nats": sig.mi_nats, "mi_corrected": sig.mi_corrected,
                "null_mean": sig.null_mean, "null_std": sig.null_std,
                "z": sig.z, "n_samples": sig.n_samples,
            }
        lis = positive_listening_probe(
            env_cfg, members, topo, alphabet, k,
            n_episodes=params["n_episodes"], base_seed=params["seed"],
        )
        probes["listening_tv"] = {
            "statistic": lis.statistic, "se": lis.se, "z": lis.z,
            "n_samples": lis.n_samples,
        }
        report["probes"] = probes
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    runconfig.write_run_artifacts(out, "evaluate", params, inputs=inputs)
    print(f"mean {rep.mean:.3f} +/- {rep.ci95:.3f} over {rep.n_episodes} episodes"
          f" -> {out / 'report.json'}")
    return EXIT_OK


def cmd_sweep(args, params: dict, file_sections) -> int:
    out = _prepare_out(args)
    env_cfg, members, meta, ckpt = _community_team(args.community)
    ec_path = find_policy_checkpoint(args.ec_community)
    ec_policy, ec_store, ec_meta = load_community(ec_path)
    if int(ec_meta["obs_dim"]) != env_cfg.obs_dim:
        raise SchemaError("pretrained-policy obs dim does not match the env")
    topo = ChannelTopology.ring(int(meta["n_agents"]))
    joiner_params = runconfig.resolve("train-joiner", file_sections)
    rows = data_scaling_sweep(
        env_cfg, meta["env"], members, ec_policy, ec_store, topo,
        alphabet=int(meta["alphabet"]), n_actions=_n_actions(meta["env"]),
        target_agent=params["target_agent"],
        n_collect_list=int_list(params["n_collect_list"]),
        out_csv=out / "sweep.csv",
        methods=tuple(str_list(params["methods"])),
        trials=params["trials"], n_eval_episodes=params["n_episodes"],
        base_seed=params["seed"], fit_kwargs=_fit_kwargs(joiner_params),
    )
    runconfig.write_run_artifacts(
        out, "sweep", params,
        inputs={"community": ckpt, "ec_community": ec_path},
    )
    print(f"sweep wrote {len(rows)} new rows -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_plot(args, params: dict) -> int:
    from . import plots

    out = _prepare_out(args)
    kind = params["kind"]
    suffix = params["format"]
    target = out / f"{kind}.{suffix}"
    if kind == "bars":
        entries = []
        for path in args.inputs:
            report = json.loads(Path(path).read_text())
            entries.append((Path(path).parent.name or Path(path).stem,
                            report["mean"], report["ci95"]))
        plots.bar_chart(entries, target)
    elif kind == "lines":
        if len(args.inputs) != 1:
            raise ConfigError("lines plot takes exactly one sweep.csv")
        plots.scaling_lines(args.inputs[0], target)
    elif kind == "occupancy":
        if len(args.inputs) != 1:
            raise ConfigError("occupancy plot takes exactly one .npy histogram")
        plots.occupancy_map(np.load(args.inputs[0]), target)
    else:
        raise ConfigError(f"unknown plot kind {kind!r}")
    runconfig.write_run_artifacts(
        out, "plot", params,
        inputs={f"input{i}": Path(p) for i, p in enumerate(args.inputs)},
    )
    print(f"wrote {target}")
    return EXIT_OK


def cmd_serve(args, params: dict) -> int:
    import uvicorn

    from .service import build_app

    app = build_app(
        ectl_bundle=args.ectl, il_bundle=args.il,
        time_scale=params["time_scale"], seed=params["seed"],
        export_dir=args.out,
    )
    uvicorn.run(app, host=params["host"], port=params["port"], log_level="warning")
    return EXIT_OK


def cmd_augment_human(args, params: dict) -> int:
    out = _prepare_out(args)
    rows = read_human_rows(args.data)
    ds = augment_human_data(rows, strict_both=params["strict_both"])
    write_interactions(ds, out / "interactions.jsonl")
    episodes = {r.episode for r in ds.records}
    runconfig.write_run_artifacts(
        out, "augment-human", params, inputs={"data": Path(args.data)}
    )
    print(f"augmented {len(rows)} rows into {len(ds.records)} records "
          f"({len(episodes)} episodes) -> {out / 'interactions.jsonl'}")
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--config", help="key-value config file (INI sections)")
    common.add_argument("--jobs", type=int, help="parallelism bound")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty output directory")

    p = argparse.ArgumentParser(
        prog="claplab",
        description="Train communicating communities, collect interaction "
                    "data, train joiner agents, and evaluate replacements.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    boolean = argparse.BooleanOptionalAction

    tc = sub.add_parser("train-community", parents=[common],
                        help="self-play training of a communicating team")
    tc.add_argument("--env", choices=["gridworld", "driving"])
    tc.add_argument("--n-agents", type=int, dest="n_agents")
    tc.add_argument("--alphabet", type=int)
    tc.add_argument("--iterations", type=int)
    tc.add_argument("--batch-steps", type=int, dest="batch_steps")
    tc.add_argument("--n-envs", type=int, dest="n_envs")
    tc.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    tc.add_argument("--pit-enabled", action=boolean, dest="pit_enabled")
    tc.add_argument("--horizon", type=int)

    co = sub.add_parser("collect", parents=[common],
                        help="record eval-mode interaction data around one agent")
    co.add_argument("--community", required=True)
    co.add_argument("--n-episodes", type=int, dest="n_episodes")
    co.add_argument("--target-agent", type=int, dest="target_agent")
    co.add_argument("--bias-filter", action=boolean, dest="bias_filter")

    tj = sub.add_parser("train-joiner", parents=[common],
                        help="fit a joiner on an interaction dataset")
    tj.add_argument("method", choices=["il", "ectl"])
    tj.add_argument("--data", required=True)
    tj.add_argument("--ec-community", dest="ec_community",
                    help="pretrained self-play community (ectl only)")
    tj.add_argument("--max-epochs", type=int, dest="max_epochs")
    tj.add_argument("--patience", type=int)
    tj.add_argument("--minibatch", type=int)

    ev = sub.add_parser("evaluate", parents=[common],
                        help="zero-shot team evaluation, ablations, probes")
    ev.add_argument("--community", required=True)
    ev.add_argument("--joiner", help="joiner bundle directory replacing the target")
    ev.add_argument("--n-episodes", type=int, dest="n_episodes")
    ev.add_argument("--target-agent", type=int, dest="target_agent")
    ev.add_argument("--block-comm", action=boolean, dest="block_comm")
    ev.add_argument("--blind-private", action=boolean, dest="blind_private")
    ev.add_argument("--probes", action=boolean)

    sw = sub.add_parser("sweep", parents=[common],
                        help="collect/train/evaluate grid over dataset sizes")
    sw.add_argument("--community", required=True)
    sw.add_argument("--ec-community", dest="ec_community", required=True)
    sw.add_argument("--n-collect-list", dest="n_collect_list")
    sw.add_argument("--methods")
    sw.add_argument("--trials", type=int)
    sw.add_argument("--n-episodes", type=int, dest="n_episodes")
    sw.add_argument("--target-agent", type=int, dest="target_agent")

    pl = sub.add_parser("plot", parents=[common],
                        help="render charts from reports and sweep CSVs")
    pl.add_argument("inputs", nargs="+")
    pl.add_argument("--kind", choices=["bars", "lines", "occupancy"])
    pl.add_argument("--format", choices=["png", "svg"])

    se = sub.add_parser("serve", parents=[common],
                        help="real-time driving-game server for the browser UI")
    se.add_argument("--host")
    se.add_argument("--port", type=int)
    se.add_argument("--time-scale", type=float, dest="time_scale")
    se.add_argument("--ectl", help="ectl joiner bundle for play mode")
    se.add_argument("--il", help="il joiner bundle for play mode")

    ah = sub.add_parser("augment-human", parents=[common],
                        help="seat-swap augmentation of dual-control rows")
    ah.add_argument("--data", required=True)
    ah.add_argument("--strict-both", action=boolean, dest="strict_both")

    return p


_OVERRIDE_KEYS = {
    "train-community": ["seed", "jobs", "env", "n_agents", "alphabet",
                        "iterations", "batch_steps", "n_envs",
                        "checkpoint_every", "pit_enabled", "horizon"],
    "collect": ["seed", "jobs", "n_episodes", "target_agent", "bias_filter"],
    "train-joiner": ["seed", "jobs", "max_epochs", "patience", "minibatch"],
    "evaluate": ["seed", "jobs", "n_episodes", "target_agent", "block_comm",
                 "blind_private", "probes"],
    "sweep": ["seed", "jobs", "n_collect_list", "methods", "trials",
              "n_episodes", "target_agent"],
    "plot": ["seed", "jobs", "kind", "format"],
    "serve": ["seed", "jobs", "host", "port", "time_scale"],
    "augment-human": ["seed", "jobs", "strict_both"],
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_sections = (
            runconfig.load_config_file(args.config) if args.config else {}
        )
        overrides = {
            k: getattr(args, k, None) for k in _OVERRIDE_KEYS[args.command]
        }
        params = runconfig.resolve(args.command, file_sections, overrides)

        if args.command == "train-community":
            return cmd_train_community(args, params)
        if args.command == "collect":
            return cmd_collect(args, params)
        if args.command == "train-joiner":
            return cmd_train_joiner(args, params)
        if args.command == "evaluate":
            return cmd_evaluate(args, params)
        if args.command == "sweep":
            return cmd_sweep(args, params, file_sections)
        if args.command == "plot":
            return cmd_plot(args, params)
        if args.command == "serve":
            return cmd_serve(args, params)
        if args.command == "augment-human":
            return cmd_augment_human(args, params)
        raise ConfigError(f"unhandled command {args.command!r}")
    except ConfigError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Refusal as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_REFUSED
    except (DivergenceError, NonFiniteError) as e:
        print(f"numerical divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SchemaError, CheckpointError, FileNotFoundError, ValueError,
            KeyError, TypeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
