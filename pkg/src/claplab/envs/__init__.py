"""Environments: a communicating-goals gridworld and a two-car driving game,
each with a scalar reference implementation and a vectorized batch twin."""

from __future__ import annotations

from typing import Mapping

from .driving import (
    DRIVE_ACTION_NAMES,
    N_DRIVE_ACTIONS,
    N_GOAL_SLOTS,
    DrivingBatch,
    DrivingConfig,
    DrivingGame,
    DrivingState,
)
from .gridworld import (
    GRID_ACTION_NAMES,
    GRID_PRIVATE_DIM,
    N_GRID_ACTIONS,
    Gridworld,
    GridworldBatch,
    GridworldConfig,
    GridworldState,
)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_pairs(text: str, arity: int) -> tuple[tuple[float, ...], ...]:
    out = []
    for chunk in text.split(";"):
        nums = tuple(float(x) for x in chunk.split(","))
        if len(nums) != arity:
            raise ValueError(f"expected {arity} comma-separated numbers: {chunk!r}")
        out.append(nums)
    return tuple(out)


def gridworld_config_from_mapping(m: Mapping[str, str]) -> GridworldConfig:
    kwargs = {}
    if "n_agents" in m:
        kwargs["n_agents"] = int(m["n_agents"])
    if "horizon" in m:
        kwargs["horizon"] = int(m["horizon"])
    return GridworldConfig(**kwargs)


def driving_config_from_mapping(m: Mapping[str, str]) -> DrivingConfig:
    kwargs = {}
    for key in (
        "pit_radius", "turn_angle", "accel", "dt", "alpha", "c_time",
        "r_goal", "c_pit", "arena_half", "reach_threshold", "speed_cap",
    ):
        if key in m:
            kwargs[key] = float(m[key])
    if "horizon" in m:
        kwargs["horizon"] = int(m["horizon"])
    if "pit_enabled" in m:
        kwargs["pit_enabled"] = _parse_bool(m["pit_enabled"])
    if "pit_center" in m:
        (kwargs["pit_center"],) = _parse_pairs(m["pit_center"], 2)
    if "spawns" in m:
        kwargs["spawns"] = _parse_pairs(m["spawns"], 3)
    if "goal_slots" in m:
        kwargs["goal_slots"] = _parse_pairs(m["goal_slots"], 2)
    return DrivingConfig(**kwargs)


__all__ = [
    "DRIVE_ACTION_NAMES",
    "DrivingBatch",
    "DrivingConfig",
    "DrivingGame",
    "DrivingState",
    "GRID_ACTION_NAMES",
    "GRID_PRIVATE_DIM",
    "Gridworld",
    "GridworldBatch",
    "GridworldConfig",
    "GridworldState",
    "N_DRIVE_ACTIONS",
    "N_GOAL_SLOTS",
    "N_GRID_ACTIONS",
    "gridworld_config_from_mapping",
    "driving_config_from_mapping",
]
