"""MLPs, parameter storage, the Gumbel-Softmax channel relaxation,
and categorical losses built on the tape primitives."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .tape import Tape, Tensor


class NonFiniteError(ArithmeticError):
    """A gradient, parameter, or loss stopped being finite."""


class ParamStore:
    """Named parameter arrays plus per-parameter optimizer state buffers.

    Shapes are fixed at creation; `step_count` tracks optimizer steps for
    Adam bias correction.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}
        self._slots: dict[str, dict[str, np.ndarray]] = {}
        self.step_count = 0

    def create(self, name: str, array: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        self._params[name] = Tensor(np.array(array, dtype=self.dtype))
        return self._params[name]

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def tensors(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def slot(self, name: str, slot_name: str) -> np.ndarray:
        slots = self._slots.setdefault(name, {})
        if slot_name not in slots:
            slots[slot_name] = np.zeros_like(self._params[name].data)
        return slots[slot_name]

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p.data)) for p in self._params.values())

    def n_params(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.tensors()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            missing = set(self._params) ^ set(state)
            raise ValueError(f"parameter name mismatch: {sorted(missing)}")
        for name, arr in state.items():
            p = self._params[name]
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"{name}: shape {arr.shape} != expected {p.data.shape}"
                )
            p.data = np.array(arr, dtype=self.dtype)


@dataclass(frozen=True)
class MlpSpec:
    """Feed-forward net shape: linear layers with tanh between hidden ones,
    linear output."""

    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_sizes, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer dims must be >= 1, got {dims}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_sizes, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


class Mlp:
    """An MLP whose parameters live in a ParamStore under `name.w{i}/b{i}`."""

    def __init__(self, name: str, spec: MlpSpec):
        self.name = name
        self.spec = spec

    def param_names(self) -> list[str]:
        out = []
        for i in range(len(self.spec.layer_dims)):
            out += [f"{self.name}.w{i}", f"{self.name}.b{i}"]
        return out

    def init_params(self, store: ParamStore, rng: np.random.Generator) -> None:
        for i, (fan_in, fan_out) in enumerate(self.spec.layer_dims):
            bound = 1.0 / np.sqrt(fan_in)
            store.create(f"{self.name}.w{i}", rng.uniform(-bound, bound, (fan_in, fan_out)))
            store.create(f"{self.name}.b{i}", np.zeros(fan_out))

    def forward(self, store: ParamStore, x: Tensor, tape: Tape) -> Tensor:
        if x.data.shape[-1] != self.spec.input_dim:
            raise ValueError(
                f"{self.name}: input dim {x.data.shape[-1]} != {self.spec.input_dim}"
            )
        h = x
        last = len(self.spec.layer_dims) - 1
        for i in range(last + 1):
            h = tape.add(tape.matmul(h, store[f"{self.name}.w{i}"]), store[f"{self.name}.b{i}"])
            if i < last:
                h = tape.tanh(h)
        return h

    def forward_np(self, store: ParamStore, x: np.ndarray) -> np.ndarray:
        """Inference path: same math, no recording."""
        if x.shape[-1] != self.spec.input_dim:
            raise ValueError(
                f"{self.name}: input dim {x.shape[-1]} != {self.spec.input_dim}"
            )
        h = x
        last = len(self.spec.layer_dims) - 1
        for i in range(last + 1):
            h = h @ store[f"{self.name}.w{i}"].data + store[f"{self.name}.b{i}"].data
            if i < last:
                h = np.tanh(h)
        return h


# ---------------------------------------------------------------------------
# Channel relaxation and losses
# ---------------------------------------------------------------------------


def sample_gumbel(rng: np.random.Generator, shape, dtype=np.float32) -> np.ndarray:
    u = rng.random(shape).astype(dtype)
    tiny = np.finfo(dtype).tiny
    return -np.log(-np.log(np.clip(u, tiny, 1.0 - 1e-7)))


def gumbel_softmax(
    tape: Tape, logits: Tensor, noise: np.ndarray, temperature: float
) -> Tensor:
    """softmax((logits + noise) / temperature); differentiable in logits.

    `noise` holds the Gumbel(0,1) draws; passing them in keeps update-time
    replays consistent with what was sampled at collection time.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    shifted = tape.add(logits, tape.constant(np.asarray(noise, dtype=logits.dtype)))
    return tape.softmax(tape.scale(shifted, 1.0 / temperature))


def gumbel_softmax_np(
    logits: np.ndarray, noise: np.ndarray, temperature: float
) -> np.ndarray:
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    # multiply by the reciprocal so this matches the tape path bit for bit
    z = (logits + noise) * (1.0 / temperature)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cce_loss(tape: Tape, logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean categorical cross-entropy -log softmax(logits)[target]."""
    targets = np.atleast_1d(np.asarray(targets))
    if logits.data.ndim != 2:
        raise ValueError("cce_loss expects (batch, classes) logits")
    n_classes = logits.data.shape[-1]
    if np.any(targets < 0) or np.any(targets >= n_classes):
        raise ValueError(f"target index outside [0, {n_classes})")
    picked = tape.take_per_row(tape.log_softmax(logits), targets)
    return tape.neg(tape.mean(picked))


def cce_loss_np(logits: np.ndarray, targets: np.ndarray) -> float:
    targets = np.atleast_1d(np.asarray(targets))
    z = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    return float(-logp[np.arange(len(targets)), targets].mean())


def entropy_mean(tape: Tape, logits: Tensor) -> Tensor:
    """Mean entropy of the categorical distributions given by logit rows."""
    logp = tape.log_softmax(logits)
    p = tape.softmax(logits)
    per_row = tape.neg(tape.sum(tape.mul(p, logp), axis=-1))
    return tape.mean(per_row)


def softmax_np(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax_np(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def sample_categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """Row-wise categorical draw from a (batch, classes) probability matrix."""
    cdf = probs.cumsum(axis=-1)
    cdf[..., -1] = 1.0  # guard the tail against rounding
    u = rng.random(probs.shape[:-1] + (1,))
    return (cdf < u).sum(axis=-1)
