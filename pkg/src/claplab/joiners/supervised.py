"""Shared supervised-classifier training loop for joiner construction.

All joiner sub-models (imitation heads and translation functions) are plain
MLP classifiers fit with minibatch SGD + momentum and weight decay, early
stopped on a held-out split drawn by episode so temporally-correlated rows
never leak across the split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import InteractionRecord
from ..ndiff import Mlp, ParamStore, Tape, Tensor, cce_loss, cce_loss_np
from ..ndiff.optim import sgd_momentum_step


@dataclass(frozen=True)
class FitResult:
    epochs_run: int
    best_epoch: int
    train_loss: float       # final-epoch mean minibatch CCE
    val_loss: float | None  # best held-out CCE (None when no held-out set)


def split_records_by_episode(
    records: Sequence[InteractionRecord],
    rng: np.random.Generator,
    val_frac: float = 0.1,
) -> tuple[list[InteractionRecord], list[InteractionRecord]]:
    """90/10-style split on episode ids, not rows. With a single episode the
    validation side comes back empty (callers then train without early stop).
    """
    if not records:
        raise ValueError("cannot split an empty record list")
    episodes = sorted({r.episode for r in records})
    if len(episodes) < 2:
        return list(records), []
    shuffled = [episodes[i] for i in rng.permutation(len(episodes))]
    n_val = max(1, round(val_frac * len(episodes)))
    val_eps = set(shuffled[:n_val])
    train = [r for r in records if r.episode not in val_eps]
    val = [r for r in records if r.episode in val_eps]
    return train, val


def _mean_cce(net: Mlp, store: ParamStore, X: np.ndarray, y: np.ndarray) -> float:
    total, n = 0.0, 0
    for lo in range(0, len(X), 4096):
        xb, yb = X[lo : lo + 4096], y[lo : lo + 4096]
        total += cce_loss_np(net.forward_np(store, xb), yb) * len(xb)
        n += len(xb)
    return total / n


def fit_classifier(
    net: Mlp,
    store: ParamStore,
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    X_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    lr: float = 1e-3,
    momentum: float = 0.9,
    weight_decay: float = 1e-5,
    minibatch: int = 1024,
    max_epochs: int = 1500,
    patience: int = 100,
) -> FitResult:
    """Fit `net` (living in `store`) to (X, y) and restore the held-out-best
    parameters before returning."""
    if len(X) == 0:
        raise ValueError("empty training set")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} inputs vs {len(y)} labels")
    X = np.asarray(X, dtype=store.dtype)
    y = np.asarray(y, dtype=np.int64)
    has_val = X_val is not None and len(X_val) > 0
    if has_val:
        X_val = np.asarray(X_val, dtype=store.dtype)
        y_val = np.asarray(y_val, dtype=np.int64)

    best_val = np.inf
    best_epoch = 0
    best_state = None
    train_loss = np.nan
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(len(X))
        losses = []
        for lo in range(0, len(X), minibatch):
            idx = order[lo : lo + minibatch]
            tape = Tape()
            logits = net.forward(store, Tensor(X[idx]), tape)
            loss = cce_loss(tape, logits, y[idx])
            store.zero_grads()
            tape.backward(loss)
            sgd_momentum_step(store, lr, momentum, weight_decay)
            losses.append(float(loss.data))
        train_loss = float(np.mean(losses))
        if has_val:
            val = _mean_cce(net, store, X_val, y_val)
            if val < best_val:
                best_val = val
                best_epoch = epoch
                best_state = store.snapshot()
            elif epoch - best_epoch >= patience:
                break
    if best_state is not None:
        store.load_state(best_state)
    return FitResult(
        epochs_run=epoch,
        best_epoch=best_epoch if has_val else epoch,
        train_loss=train_loss,
        val_loss=float(best_val) if has_val else None,
    )
