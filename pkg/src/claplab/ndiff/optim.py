"""Optimizer steps over a ParamStore.

Both update rules walk every named parameter; slot buffers (Adam moments,
momentum velocity) live inside the store so checkpoints can carry them.
"""

from __future__ import annotations

import numpy as np

from .nn import NonFiniteError, ParamStore


def _grads_or_raise(store: ParamStore) -> list[tuple[str, np.ndarray]]:
    out = []
    for name, p in store.tensors():
        if p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite gradient for {name!r}")
        out.append((name, p.grad))
    if not out:
        raise ValueError("no gradients present; run backward() first")
    return out


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    grads = _grads_or_raise(store)
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, g in grads:
        p = store[name]
        m = store.slot(name, "adam_m")
        v = store.slot(name, "adam_v")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p.data -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.data.dtype)


def sgd_momentum_step(
    store: ParamStore,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
) -> None:
    grads = _grads_or_raise(store)
    store.step_count += 1
    for name, g in grads:
        p = store[name]
        vel = store.slot(name, "momentum")
        step = g if weight_decay == 0.0 else g + weight_decay * p.data
        vel *= momentum
        vel += step
        p.data -= (lr * vel).astype(p.data.dtype)
