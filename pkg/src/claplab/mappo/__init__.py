"""Community self-play: shared communicating policy + central value net."""

from .gae import compute_gae
from .nets import CentralValueNet, PolicyNet, routing_index
from .trainer import (
    CURVE_FIELDS,
    DivergenceError,
    MappoConfig,
    RolloutBatch,
    collect_rollout,
    community_tag,
    load_community,
    make_env_batch,
    normalize_advantages,
    ppo_update,
    save_community,
    train_community,
    write_curve,
)

__all__ = [
    "CURVE_FIELDS",
    "CentralValueNet",
    "DivergenceError",
    "MappoConfig",
    "PolicyNet",
    "RolloutBatch",
    "collect_rollout",
    "community_tag",
    "compute_gae",
    "load_community",
    "make_env_batch",
    "normalize_advantages",
    "ppo_update",
    "routing_index",
    "save_community",
    "train_community",
    "write_curve",
]
