"""Run configuration and provenance.

One plain-text config format for every command: INI sections named after
the CLI subcommands, `key = value` entries. Resolution order is
defaults < config file < command-line flags. Every run directory gets the
fully resolved parameters (`config.resolved`) and content hashes of its
inputs (`provenance.json`), which together with the seed are enough to
replay it bit-identically.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path

RESOLVED_NAME = "config.resolved"
PROVENANCE_NAME = "provenance.json"


class ConfigError(ValueError):
    """Malformed config file, unknown key, or uncoercible value."""


# Every tunable constant in the pipeline is a named key here. `common`
# applies to all commands; a command section overrides it.
DEFAULTS: dict[str, dict] = {
    "common": {
        "seed": 0,
        "jobs": 1,
    },
    "train-community": {
        "env": "gridworld",
        "n_agents": 3,
        "alphabet": 5,
        "iterations": 300,
        "batch_steps": 10_000,
        "n_envs": 1000,
        "minibatch": 2048,
        "sgd_iters": 5,
        "lr": 5e-4,
        "gamma": 0.99,
        "gae_lambda": 0.95,
        "clip_eps": 0.2,
        "vf_clip": 10.0,
        "vf_coef": 0.25,
        "ent_coef": 0.01,
        "temperature": 2.0,
        "checkpoint_every": 0,
        "pit_enabled": False,
        "horizon": 0,            # 0 = environment default
    },
    "collect": {
        "n_episodes": 100,
        "target_agent": 0,
        "bias_filter": False,
    },
    "train-joiner": {
        "lr": 3e-3,
        "momentum": 0.9,
        "weight_decay": 1e-5,
        "minibatch": 128,
        "max_epochs": 4000,
        "patience": 250,
        "il_hidden": "384,384",
        "translator_hidden": "256,256",
        "include_ids": True,
    },
    "evaluate": {
        "n_episodes": 500,
        "target_agent": 0,
        "block_comm": False,
        "blind_private": False,
        "probes": False,
    },
    "sweep": {
        "n_collect_list": "5,10,30,100",
        "methods": "il,ectl",
        "trials": 3,
        "n_episodes": 500,
        "target_agent": 0,
    },
    "plot": {
        "kind": "bars",
        "format": "png",
    },
    "serve": {
        "host": "127.0.0.1",
        "port": 8765,
        "time_scale": 1.0,
    },
    "augment-human": {
        "strict_both": False,
    },
}


def _coerce(key: str, raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None
    return raw


def load_config_file(path: str | Path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep key case
    try:
        with open(path) as f:
            parser.read_file(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    return {s: dict(parser[s]) for s in parser.sections()}


def resolve(
    command: str,
    file_sections: dict[str, dict[str, str]] | None = None,
    overrides: dict | None = None,
) -> dict:
    """defaults < config file (`[common]` then `[command]`) < overrides."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command section {command!r}")
    params = dict(DEFAULTS["common"]) | dict(DEFAULTS[command])
    for section in ("common", command):
        for key, raw in (file_sections or {}).get(section, {}).items():
            if key not in params:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            params[key] = _coerce(key, raw, params[key])
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in params:
            raise ConfigError(f"unknown override {key!r} for {command}")
        params[key] = value
    return params


def int_list(raw) -> list[int]:
    if isinstance(raw, (list, tuple)):
        return [int(v) for v in raw]
    items = [s.strip() for s in str(raw).split(",") if s.strip()]
    if not items:
        raise ConfigError(f"expected a comma-separated list, got {raw!r}")
    try:
        return [int(s) for s in items]
    except ValueError as e:
        raise ConfigError(str(e)) from None


def str_list(raw) -> list[str]:
    items = [s.strip() for s in str(raw).split(",") if s.strip()]
    if not items:
        raise ConfigError(f"expected a comma-separated list, got {raw!r}")
    return items


def format_resolved(command: str, params: dict) -> str:
    lines = [f"[{command}]"]
    lines += [f"{k} = {params[k]}" for k in sorted(params)]
    return "\n".join(lines) + "\n"


def hash_path(path: str | Path) -> str:
    """sha256 of a file, or of a directory's sorted (name, file-hash) list."""
    path = Path(path)
    if path.is_file():
        return hashlib.sha256(path.read_bytes()).hexdigest()
    if path.is_dir():
        h = hashlib.sha256()
        for p in sorted(path.rglob("*")):
            if p.is_file():
                h.update(str(p.relative_to(path)).encode())
                h.update(bytes.fromhex(hash_path(p)))
        return h.hexdigest()
    raise FileNotFoundError(path)


def write_run_artifacts(
    out_dir: str | Path,
    command: str,
    params: dict,
    inputs: dict[str, str | Path] | None = None,
) -> None:
    """Write `config.resolved` and `provenance.json` into `out_dir`.

    Both files are deterministic functions of (params, input contents), so
    replayed runs produce byte-identical artifacts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RESOLVED_NAME).write_text(format_resolved(command, params))
    prov = {
        "schema": "claplab-provenance-v1",
        "command": command,
        "seed": params.get("seed"),
        "inputs": {
            name: {"path": str(p), "sha256": hash_path(p)}
            for name, p in sorted((inputs or {}).items())
        },
    }
    (out_dir / PROVENANCE_NAME).write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n")


def load_resolved(out_dir: str | Path) -> tuple[str, dict]:
    """Parse a `config.resolved` back into (command, params)."""
    sections = load_config_file(Path(out_dir) / RESOLVED_NAME)
    if len(sections) != 1:
        raise ConfigError("config.resolved must contain exactly one section")
    command = next(iter(sections))
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command section {command!r}")
    defaults = dict(DEFAULTS["common"]) | dict(DEFAULTS[command])
    params = {
        k: _coerce(k, raw, defaults[k]) if k in defaults else raw
        for k, raw in sections[command].items()
    }
    return command, params
