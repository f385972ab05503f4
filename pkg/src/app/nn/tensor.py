"""Reverse-mode autodiff over numpy arrays.

Every operation returns a new ``Tensor`` that remembers its parents and a closure
pushing the output gradient back to them; ``backward`` walks the graph in reverse
topological order.
"""
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, "Tensor"]

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None) -> None:
        if isinstance(data, Tensor):
            data = data.data
        data = np.asarray(data)
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        self.data: np.ndarray = data
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._prev: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # - - - - PROPERTIES - - - -

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    # - - - - GRAPH - - - -

    @staticmethod
    def result(data: np.ndarray, parents: Sequence["Tensor"],
               backward: Callable[[np.ndarray], None]) -> "Tensor":
        """Wrap ``data`` as the output of an op; records the graph only when a parent needs it."""
        needs_grad = _grad_enabled and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs_grad)
        if needs_grad:
            out._prev = tuple(parents)
            out._backward = backward
        return out

    def accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = unbroadcast(np.asarray(grad, dtype=self.data.dtype), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)

        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.asarray(grad, dtype=self.data.dtype).copy() if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # - - - - ARITHMETIC - - - -

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other, self.dtype)

        def backward(g):
            self.accumulate(g)
            other.accumulate(g)
        return Tensor.result(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor.result(-self.data, (self,), lambda g: self.accumulate(-g))

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-as_tensor(other, self.dtype))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other, self.dtype) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other, self.dtype)

        def backward(g):
            self.accumulate(g * other.data)
            other.accumulate(g * self.data)
        return Tensor.result(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other, self.dtype)

        def backward(g):
            self.accumulate(g / other.data)
            other.accumulate(-g * self.data / other.data ** 2)
        return Tensor.result(self.data / other.data, (self, other), backward)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other, self.dtype) / self

    def __pow__(self, exponent: float) -> "Tensor":
        def backward(g):
            self.accumulate(g * exponent * self.data ** (exponent - 1))
        return Tensor.result(self.data ** exponent, (self,), backward)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = as_tensor(other, self.dtype)

        def backward(g):
            self.accumulate(g @ np.swapaxes(other.data, -1, -2))
            other.accumulate(np.swapaxes(self.data, -1, -2) @ g)
        return Tensor.result(self.data @ other.data, (self, other), backward)

    # - - - - ELEMENTWISE - - - -

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor.result(out, (self,), lambda g: self.accumulate(g * out))

    def log(self) -> "Tensor":
        return Tensor.result(np.log(self.data), (self,), lambda g: self.accumulate(g / self.data))

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor.result(out, (self,), lambda g: self.accumulate(g * (1 - out ** 2)))

    # - - - - REDUCTIONS - - - -

    def sum(self, axis: Union[None, int, Tuple[int, ...]] = None, keepdims: bool = False) -> "Tensor":
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.accumulate(np.broadcast_to(g, self.shape))
        return Tensor.result(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis: Union[None, int, Tuple[int, ...]] = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # - - - - SHAPE - - - -

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return Tensor.result(self.data.reshape(shape), (self,), lambda g: self.accumulate(g.reshape(original)))

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        axes = axes or tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return Tensor.result(self.data.transpose(axes), (self,), lambda g: self.accumulate(g.transpose(inverse)))

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def __getitem__(self, index) -> "Tensor":
        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self.accumulate(full)
        return Tensor.result(self.data[index], (self,), backward)


def as_tensor(value: ArrayLike, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype if dtype is not None else np.float64))


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            t.accumulate(np.take(g, np.arange(lo, hi), axis=axis))
    return Tensor.result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)
