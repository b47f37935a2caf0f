"""Reverse-mode autodiff over dense numpy arrays.

A Tape records one forward pass as a list of backward closures; backward()
replays them exactly once in reverse. Ops are coarse-grained (whole-array
matmuls and elementwise maps) so the heavy lifting stays inside BLAS.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class Tensor:
    """An array with a gradient slot. Gradients accumulate additively."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tape:
    """Recorded primitive ops for one differentiable forward pass."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []

    def __len__(self):
        return len(self._ops)

    def _emit(self, out: Tensor, backward: Callable[[np.ndarray], None]) -> Tensor:
        def step():
            if out.grad is not None:
                backward(out.grad)

        self._ops.append(step)
        return out

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and visit every recorded op once, in
        reverse order. `loss` must be scalar."""
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for step in reversed(self._ops):
            step()

    # -- primitives --------------------------------------------------------

    def constant(self, data, dtype=None) -> Tensor:
        return Tensor(data, dtype=dtype)

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.data @ b.data)

        def bwd(g):
            a.add_grad(g @ b.data.T)
            b.add_grad(a.data.T @ g)

        return self._emit(out, bwd)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.data + b.data)

        def bwd(g):
            a.add_grad(_unbroadcast(g, a.data.shape))
            b.add_grad(_unbroadcast(g, b.data.shape))

        return self._emit(out, bwd)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.data - b.data)

        def bwd(g):
            a.add_grad(_unbroadcast(g, a.data.shape))
            b.add_grad(_unbroadcast(-g, b.data.shape))

        return self._emit(out, bwd)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.data * b.data)

        def bwd(g):
            a.add_grad(_unbroadcast(g * b.data, a.data.shape))
            b.add_grad(_unbroadcast(g * a.data, b.data.shape))

        return self._emit(out, bwd)

    def scale(self, a: Tensor, c: float) -> Tensor:
        out = Tensor(a.data * c)
        return self._emit(out, lambda g: a.add_grad(g * c))

    def neg(self, a: Tensor) -> Tensor:
        out = Tensor(-a.data)
        return self._emit(out, lambda g: a.add_grad(-g))

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.data)
        out = Tensor(y)
        return self._emit(out, lambda g: a.add_grad(g * (1.0 - y * y)))

    def exp(self, a: Tensor) -> Tensor:
        y = np.exp(a.data)
        out = Tensor(y)
        return self._emit(out, lambda g: a.add_grad(g * y))

    def softmax(self, a: Tensor, axis: int = -1) -> Tensor:
        z = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)
        out = Tensor(y)

        def bwd(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            a.add_grad(y * (g - dot))

        return self._emit(out, bwd)

    def log_softmax(self, a: Tensor, axis: int = -1) -> Tensor:
        z = a.data - a.data.max(axis=axis, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
        y = z - lse
        out = Tensor(y)

        def bwd(g):
            p = np.exp(y)
            a.add_grad(g - p * g.sum(axis=axis, keepdims=True))

        return self._emit(out, bwd)

    def concat(self, parts: Sequence[Tensor], axis: int = -1) -> Tensor:
        out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def bwd(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * g.ndim
                idx[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
                p.add_grad(g[tuple(idx)])

        return self._emit(out, bwd)

    def take_rows(self, a: Tensor, idx: np.ndarray) -> Tensor:
        """Row gather: out[i] = a[idx[i]]. Duplicated rows accumulate."""
        out = Tensor(a.data[idx])

        def bwd(g):
            da = np.zeros_like(a.data)
            np.add.at(da, idx, g)
            a.add_grad(da)

        return self._emit(out, bwd)

    def take_per_row(self, a: Tensor, cols: np.ndarray) -> Tensor:
        """Per-row column pick from a 2-d array: out[i] = a[i, cols[i]]."""
        rows = np.arange(a.data.shape[0])
        out = Tensor(a.data[rows, cols])

        def bwd(g):
            da = np.zeros_like(a.data)
            da[rows, cols] = g
            a.add_grad(da)

        return self._emit(out, bwd)

    def sum(self, a: Tensor, axis: int | None = None) -> Tensor:
        out = Tensor(a.data.sum(axis=axis))

        def bwd(g):
            if axis is None:
                a.add_grad(np.broadcast_to(g, a.data.shape).copy())
            else:
                a.add_grad(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

        return self._emit(out, bwd)

    def mean(self, a: Tensor, axis: int | None = None) -> Tensor:
        n = a.data.size if axis is None else a.data.shape[axis]
        out = Tensor(a.data.mean(axis=axis))

        def bwd(g):
            if axis is None:
                a.add_grad(np.broadcast_to(g / n, a.data.shape).copy())
            else:
                a.add_grad(
                    np.broadcast_to(np.expand_dims(g, axis), a.data.shape) / n
                )

        return self._emit(out, bwd)

    def minimum(self, a: Tensor, b: Tensor) -> Tensor:
        mask = a.data <= b.data  # ties route to a
        out = Tensor(np.where(mask, a.data, b.data))

        def bwd(g):
            a.add_grad(_unbroadcast(g * mask, a.data.shape))
            b.add_grad(_unbroadcast(g * ~mask, b.data.shape))

        return self._emit(out, bwd)

    def maximum(self, a: Tensor, b: Tensor) -> Tensor:
        mask = a.data >= b.data
        out = Tensor(np.where(mask, a.data, b.data))

        def bwd(g):
            a.add_grad(_unbroadcast(g * mask, a.data.shape))
            b.add_grad(_unbroadcast(g * ~mask, b.data.shape))

        return self._emit(out, bwd)

    def clip(self, a: Tensor, lo: float, hi: float) -> Tensor:
        out = Tensor(np.clip(a.data, lo, hi))
        inside = (a.data >= lo) & (a.data <= hi)
        return self._emit(out, lambda g: a.add_grad(g * inside))

    def square(self, a: Tensor) -> Tensor:
        out = Tensor(a.data * a.data)
        return self._emit(out, lambda g: a.add_grad(2.0 * g * a.data))

    def stop_gradient(self, a: Tensor) -> Tensor:
        return Tensor(a.data.copy())
