"""Minimal reverse-mode gradient engine over numpy arrays.

Every operation builds a node in a dynamic graph; ``Tensor.backward()``
topologically sorts the graph and accumulates exact gradients into
``Tensor.grad``. All math runs in float64. Only the operations the model
needs exist here; there is no broadcasting beyond numpy's own rules, and
gradients of broadcast operands are summed back to the operand shape.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to the shape of the operand it belongs to."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array with an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "_parents", "_backprop")

    def __init__(self, data, parents: Sequence["Tensor"] = (),
                 backprop: Callable[[np.ndarray], None] | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents)
        self._backprop = backprop

    # -- graph ----------------------------------------------------------

    def backward(self) -> None:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backprop is not None and node.grad is not None:
                node._backprop(node.grad)

    def _accumulate(self, grad: np.ndarray) -> None:
        self.grad = grad if self.grad is None else self.grad + grad

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- shape ----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.data.shape
        out = Tensor(self.data.reshape(shape), (self,))
        out._backprop = lambda g: self._accumulate(g.reshape(old_shape))
        return out

    @property
    def T(self) -> "Tensor":
        out = Tensor(self.data.T, (self,))
        out._backprop = lambda g: self._accumulate(g.T)
        return out

    def __getitem__(self, key) -> "Tensor":
        out = Tensor(self.data[key], (self,))

        def backprop(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            self._accumulate(full)

        out._backprop = backprop
        return out

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data + other.data, (self, other))

        def backprop(g):
            self._accumulate(_unbroadcast(g, self.data.shape))
            other._accumulate(_unbroadcast(g, other.data.shape))

        out._backprop = backprop
        return out

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data * other.data, (self, other))

        def backprop(g):
            self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        out._backprop = backprop
        return out

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = Tensor(self.data / other.data, (self, other))

        def backprop(g):
            self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            other._accumulate(
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
            )

        out._backprop = backprop
        return out

    def __neg__(self) -> "Tensor":
        out = Tensor(-self.data, (self,))
        out._backprop = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __radd__(self, other) -> "Tensor":
        return self + other

    def __rmul__(self, other) -> "Tensor":
        return self * other

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent) -> "Tensor":
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        out = Tensor(self.data ** exponent, (self,))
        out._backprop = lambda g: self._accumulate(
            g * exponent * self.data ** (exponent - 1)
        )
        return out

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError(
                f"matmul expects 2-D operands, got {self.data.shape} @ {other.data.shape}"
            )
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeError(f"matmul mismatch: {self.data.shape} @ {other.data.shape}")
        out = Tensor(self.data @ other.data, (self, other))

        def backprop(g):
            self._accumulate(g @ other.data.T)
            other._accumulate(self.data.T @ g)

        out._backprop = backprop
        return out

    # -- elementwise ------------------------------------------------------

    def exp(self) -> "Tensor":
        value = np.exp(self.data)
        out = Tensor(value, (self,))
        out._backprop = lambda g: self._accumulate(g * value)
        return out

    def log(self) -> "Tensor":
        out = Tensor(np.log(self.data), (self,))
        out._backprop = lambda g: self._accumulate(g / self.data)
        return out

    def sqrt(self) -> "Tensor":
        value = np.sqrt(self.data)
        out = Tensor(value, (self,))
        out._backprop = lambda g: self._accumulate(g / (2.0 * value))
        return out

    def tanh(self) -> "Tensor":
        value = np.tanh(self.data)
        out = Tensor(value, (self,))
        out._backprop = lambda g: self._accumulate(g * (1.0 - value * value))
        return out

    def relu(self) -> "Tensor":
        out = Tensor(np.maximum(self.data, 0.0), (self,))
        out._backprop = lambda g: self._accumulate(g * (self.data > 0.0))
        return out

    def cos(self) -> "Tensor":
        out = Tensor(np.cos(self.data), (self,))
        out._backprop = lambda g: self._accumulate(-g * np.sin(self.data))
        return out

    def arccos(self) -> "Tensor":
        out = Tensor(np.arccos(self.data), (self,))
        out._backprop = lambda g: self._accumulate(
            -g / np.sqrt(1.0 - self.data * self.data)
        )
        return out

    def clip(self, lo: float, hi: float) -> "Tensor":
        """Clamp values; the gradient passes through only inside the range."""
        out = Tensor(np.clip(self.data, lo, hi), (self,))
        inside = (self.data > lo) & (self.data < hi)
        out._backprop = lambda g: self._accumulate(g * inside)
        return out

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def backprop(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
                return
            expanded = g if keepdims else np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(expanded, self.data.shape).copy())

        out._backprop = backprop
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int, keepdims: bool = False) -> "Tensor":
        """Max along one axis; the gradient flows to the first argmax."""
        idx = np.argmax(self.data, axis=axis)
        value = np.take_along_axis(self.data, np.expand_dims(idx, axis), axis=axis)
        out = Tensor(value if keepdims else value.squeeze(axis), (self,))

        def backprop(g):
            expanded = g if keepdims else np.expand_dims(g, axis)
            full = np.zeros_like(self.data)
            np.put_along_axis(full, np.expand_dims(idx, axis), expanded, axis=axis)
            self._accumulate(full)

        out._backprop = backprop
        return out

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backprop(g):
        for tensor, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            tensor._accumulate(g[tuple(index)])

    out._backprop = backprop
    return out


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of a 2-D tensor by integer index (rows may repeat)."""
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx], (x,))

    def backprop(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        x._accumulate(full)

    out._backprop = backprop
    return out


def softmax_rows(scores: Tensor) -> Tensor:
    """Row softmax of a 2-D tensor, numerically stabilized by a constant shift."""
    shift = Tensor(scores.data.max(axis=1, keepdims=True))  # constant: softmax is shift-invariant
    exps = (scores - shift).exp()
    return exps / exps.sum(axis=1, keepdims=True)


def log_sum_exp_rows(scores: Tensor) -> Tensor:
    """Row-wise log(sum(exp(.))), keepdims, stabilized by a constant shift."""
    shift = Tensor(scores.data.max(axis=1, keepdims=True))
    return (scores - shift).exp().sum(axis=1, keepdims=True).log() + shift
