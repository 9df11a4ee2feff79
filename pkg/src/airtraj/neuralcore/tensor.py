"""Reverse-mode differentiation over flat float64 arrays.

Every operation builds a node in an implicit tape: the output tensor keeps
references to its parents and a closure that routes the incoming gradient
back to them. ``Tensor.backward()`` walks the tape in reverse topological
order. All math runs in 64-bit floats; any NaN/Inf produced by an op is an
error state and raises immediately.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf."""


def _as_array(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if not a.flags["C_CONTIGUOUS"]:
        a = np.ascontiguousarray(a)
    return a


class Tensor:
    """A float64 array plus an optional gradient of identical shape."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        name: str = "",
    ):
        self.values = _as_array(values)
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise NonFiniteError(f"non-finite values in tensor {name or '<unnamed>'}")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor; scalar outputs need no seed."""
        if seed is None:
            if self.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            seed = np.ones_like(self.values)
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
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.accumulate_grad(np.asarray(seed, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are wrapped as constant tensors
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(values, name: str = "") -> Tensor:
    return Tensor(values, requires_grad=False, name=name)


def parameter(values, name: str = "") -> Tensor:
    return Tensor(values, requires_grad=True, name=name)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _node(values, parents: Sequence[Tensor], backward, name: str) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(values, parents=parents, backward=backward, name=name)
    return Tensor(values, name=name)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values + b.values

    def backward(g):
        a.accumulate_grad(_unbroadcast(g, a.shape))
        b.accumulate_grad(_unbroadcast(g, b.shape))

    return _node(out_values, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values - b.values

    def backward(g):
        a.accumulate_grad(_unbroadcast(g, a.shape))
        b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _node(out_values, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values * b.values

    def backward(g):
        a.accumulate_grad(_unbroadcast(g * b.values, a.shape))
        b.accumulate_grad(_unbroadcast(g * a.values, b.shape))

    return _node(out_values, (a, b), backward, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values / b.values

    def backward(g):
        a.accumulate_grad(_unbroadcast(g / b.values, a.shape))
        b.accumulate_grad(_unbroadcast(-g * a.values / (b.values * b.values), b.shape))

    return _node(out_values, (a, b), backward, "div")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate_grad(-g)

    return _node(-a.values, (a,), backward, "neg")


def pow_(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out_values = a.values**p

    def backward(g):
        a.accumulate_grad(g * p * a.values ** (p - 1.0))

    return _node(out_values, (a,), backward, "pow")


def square(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate_grad(g * 2.0 * a.values)

    return _node(a.values * a.values, (a,), backward, "square")


# ---------------------------------------------------------------------------
# transcendental


def exp(a: Tensor) -> Tensor:
    out_values = np.exp(a.values)

    def backward(g):
        a.accumulate_grad(g * out_values)

    return _node(out_values, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate_grad(g / a.values)

    return _node(np.log(a.values), (a,), backward, "log")


def sqrt(a: Tensor) -> Tensor:
    out_values = np.sqrt(a.values)

    def backward(g):
        a.accumulate_grad(g * 0.5 / out_values)

    return _node(out_values, (a,), backward, "sqrt")


def tanh(a: Tensor) -> Tensor:
    out_values = np.tanh(a.values)

    def backward(g):
        a.accumulate_grad(g * (1.0 - out_values * out_values))

    return _node(out_values, (a,), backward, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out_values = 1.0 / (1.0 + np.exp(-a.values))

    def backward(g):
        a.accumulate_grad(g * out_values * (1.0 - out_values))

    return _node(out_values, (a,), backward, "sigmoid")


def relu(a: Tensor) -> Tensor:
    out_values = np.maximum(a.values, 0.0)

    def backward(g):
        a.accumulate_grad(g * (a.values > 0.0))

    return _node(out_values, (a,), backward, "relu")


def sin(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate_grad(g * np.cos(a.values))

    return _node(np.sin(a.values), (a,), backward, "sin")


def cos(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate_grad(-g * np.sin(a.values))

    return _node(np.cos(a.values), (a,), backward, "cos")


def asin(a: Tensor) -> Tensor:
    out_values = np.arcsin(a.values)

    def backward(g):
        a.accumulate_grad(g / np.sqrt(1.0 - a.values * a.values))

    return _node(out_values, (a,), backward, "asin")


def atan2(y: Tensor, x: Tensor) -> Tensor:
    out_values = np.arctan2(y.values, x.values)

    def backward(g):
        denom = x.values * x.values + y.values * y.values
        y.accumulate_grad(_unbroadcast(g * x.values / denom, y.shape))
        x.accumulate_grad(_unbroadcast(-g * y.values / denom, x.shape))

    return _node(out_values, (y, x), backward, "atan2")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out_values = np.clip(a.values, lo, hi)

    def backward(g):
        inside = (a.values > lo) & (a.values < hi)
        a.accumulate_grad(g * inside)

    return _node(out_values, (a,), backward, "clip")


# ---------------------------------------------------------------------------
# reductions, shaping, linear algebra


def sum_(a: Tensor) -> Tensor:
    def backward(g):
        a.accumulate_grad(np.full_like(a.values, float(g)))

    return _node(a.values.sum(), (a,), backward, "sum")


def mean_(a: Tensor) -> Tensor:
    n = a.size

    def backward(g):
        a.accumulate_grad(np.full_like(a.values, float(g) / n))

    return _node(a.values.mean(), (a,), backward, "mean")


def dot(a: Tensor, b: Tensor) -> Tensor:
    out_values = a.values @ b.values

    def backward(g):
        a.accumulate_grad(float(g) * b.values)
        b.accumulate_grad(float(g) * a.values)

    return _node(out_values, (a, b), backward, "dot")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b for (m,n)@(n,) -> (m,) or (m,n)@(n,k) -> (m,k)."""
    out_values = a.values @ b.values

    def backward(g):
        if b.values.ndim == 1:
            a.accumulate_grad(np.outer(g, b.values))
            b.accumulate_grad(a.values.T @ g)
        else:
            a.accumulate_grad(g @ b.values.T)
            b.accumulate_grad(a.values.T @ g)

    return _node(out_values, (a, b), backward, "matmul")


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    out_values = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            p.accumulate_grad(g[tuple(idx)])

    return _node(out_values, tuple(parts), backward, "concat")


def getitem(a: Tensor, idx) -> Tensor:
    out_values = a.values[idx]

    def backward(g):
        full = np.zeros_like(a.values)
        np.add.at(full, idx, g)
        a.accumulate_grad(full)

    return _node(out_values, (a,), backward, "getitem")


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.shape

    def backward(g):
        a.accumulate_grad(g.reshape(orig))

    return _node(a.values.reshape(shape), (a,), backward, "reshape")


def softmax(a: Tensor) -> Tensor:
    """Numerically stable softmax over a 1-D tensor."""
    shifted = a.values - a.values.max()
    e = np.exp(shifted)
    out_values = e / e.sum()

    def backward(g):
        s = out_values
        a.accumulate_grad(s * (g - float(g @ s)))

    return _node(out_values, (a,), backward, "softmax")


def global_norm(arrays: Iterable[np.ndarray]) -> float:
    total = 0.0
    for a in arrays:
        total += float(np.dot(a.reshape(-1), a.reshape(-1)))
    return math.sqrt(total)
