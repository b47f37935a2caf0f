"""Minimal reverse-mode autodiff on numpy, plus the small nn/optim layer
the trainers use."""

from .checkpoint import CheckpointError, load_store, read_manifest, save_store
from .nn import (
    Mlp,
    MlpSpec,
    NonFiniteError,
    ParamStore,
    cce_loss,
    cce_loss_np,
    entropy_mean,
    gumbel_softmax,
    gumbel_softmax_np,
    log_softmax_np,
    sample_categorical,
    sample_gumbel,
    softmax_np,
)
from .optim import adam_step, sgd_momentum_step
from .tape import Tape, Tensor

__all__ = [
    "CheckpointError",
    "Mlp",
    "MlpSpec",
    "NonFiniteError",
    "ParamStore",
    "Tape",
    "Tensor",
    "adam_step",
    "cce_loss",
    "cce_loss_np",
    "entropy_mean",
    "gumbel_softmax",
    "gumbel_softmax_np",
    "load_store",
    "log_softmax_np",
    "read_manifest",
    "sample_categorical",
    "sample_gumbel",
    "save_store",
    "sgd_momentum_step",
    "softmax_np",
]
