"""Reverse-mode automatic differentiation over dense numpy arrays.

Design-by-run: every differentiable op appends a backward rule to the
active Tape, which is rebuilt on each forward pass. Tensors are immutable
after creation; grads accumulate across backward() calls until zero_grad().

Default dtype is float32 for training and inference. Gradient-check builds
construct float64 leaves; ops preserve the dtype of their inputs.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import InputError

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.float32, np.float64)

# Active tape (None outside a Tape context) and grad-recording switch.
_active_tape: "Tape | None" = None
_grad_enabled: bool = True


class Tensor:
    """Dense real array with optional gradient, node in a reverse-mode tape."""

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
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

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, k):
        return power(self, k)

    def sum(self, axis=None):
        return tsum(self, axis=axis)

    def mean(self, axis=None):
        return tmean(self, axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


class Tape:
    """Ordered record of operations, one backward rule each.

    Entries are appended in forward (topological) order, so a single
    reversed traversal propagates grads to every reachable leaf.
    """

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __enter__(self) -> "Tape":
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc) -> None:
        global _active_tape
        _active_tape = self._prev

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        out.tape = self
        self._entries.append((out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise InputError(f"backward requires a scalar loss, got shape {loss.shape}")
        seed = np.ones_like(loss.data)
        loss.grad = seed if loss.grad is None else loss.grad + seed
        for out, inputs, rule in reversed(self._entries):
            g = out.grad
            if g is None:
                continue
            in_grads = rule(g)
            for t, gi in zip(inputs, in_grads):
                if gi is None or not (t.requires_grad or t.tape is self):
                    continue
                # Rules may return views; accumulation always allocates fresh
                # arrays, so aliasing is safe as long as grads stay read-only.
                t.grad = gi if t.grad is None else t.grad + gi


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def backward(loss: Tensor) -> None:
    """Run reverse accumulation from a scalar loss over its recording tape."""
    if loss.tape is None:
        raise InputError("loss was not recorded on any tape")
    loss.tape.backward(loss)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_rule: Callable) -> Tensor:
    if _grad_enabled and _active_tape is not None and any(
        t.requires_grad or t.tape is _active_tape for t in inputs
    ):
        _active_tape.record(out, inputs, backward_rule)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ----------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out = Tensor(a.data + b.data)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), rule)


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out = Tensor(a.data - b.data)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), rule)


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out = Tensor(a.data * b.data)

    def rule(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), rule)


def div(a: Tensor, b) -> Tensor:
    b = _as_tensor(b, a.dtype)
    out = Tensor(a.data / b.data)

    def rule(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _record(out, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def power(a: Tensor, k: int) -> Tensor:
    """Integer power, k >= 0 (design-matrix columns need exact s**0 == 1)."""
    if not isinstance(k, (int, np.integer)) or k < 0:
        raise InputError(f"power expects a non-negative integer exponent, got {k!r}")
    out = Tensor(a.data ** k)
    if k == 0:
        return _record(out, (a,), lambda g: (np.zeros_like(a.data),))

    def rule(g):
        return (g * k * a.data ** (k - 1),)

    return _record(out, (a,), rule)


def sqrt(a: Tensor) -> Tensor:
    root = np.sqrt(a.data)
    out = Tensor(root)

    def rule(g):
        return (g / (2.0 * root),)

    return _record(out, (a,), rule)


def sigmoid(a: Tensor) -> Tensor:
    # Numerically stable in both tails.
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)

    def rule(g):
        return (g * y * (1.0 - y),)

    return _record(out, (a,), rule)


def leaky_relu(a: Tensor, negative_slope: float = 0.01) -> Tensor:
    x = a.data
    out = Tensor(np.where(x > 0, x, negative_slope * x))

    def rule(g):
        return (g * np.where(x > 0, np.asarray(1.0, x.dtype), np.asarray(negative_slope, x.dtype)),)

    return _record(out, (a,), rule)


# -- linear algebra --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise InputError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), rule)


# -- reductions ------------------------------------------------------------


def tsum(a: Tensor, axis=None) -> Tensor:
    # Accumulate in 64-bit; small-batch loss sums stay stable in 32-bit mode.
    val = np.sum(a.data, axis=axis, dtype=np.float64).astype(a.dtype)
    out = Tensor(val)

    def rule(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)
        gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).astype(a.dtype, copy=False),)

    return _record(out, (a,), rule)


def tmean(a: Tensor, axis=None) -> Tensor:
    denom = a.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis) / float(denom)


def reduce_max(a: Tensor, axis: int) -> Tensor:
    """Max along one axis; grad flows to the first argmax element."""
    idx = np.argmax(a.data, axis=axis)
    val = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    out = Tensor(val)

    def rule(g):
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (ga,)

    return _record(out, (a,), rule)


def reduce_min(a: Tensor, axis: int) -> Tensor:
    return neg(reduce_max(neg(a), axis))


# -- shape manipulation ------------------------------------------------------


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def rule(g):
        return (g.reshape(a.shape),)

    return _record(out, (a,), rule)


def transpose(a: Tensor, axes: tuple[int, ...] | None) -> Tensor:
    out = Tensor(a.data.transpose(axes))
    if axes is None:
        inv = None
    else:
        inv = tuple(np.argsort(axes))

    def rule(g):
        return (g.transpose(inv),)

    return _record(out, (a,), rule)


def select(a: Tensor, index: int, axis: int = 0) -> Tensor:
    """Take one slice along `axis` (used to peel samples off a batch)."""
    out = Tensor(np.take(a.data, index, axis=axis))

    def rule(g):
        ga = np.zeros_like(a.data)
        sl = [slice(None)] * a.ndim
        sl[axis] = index
        ga[tuple(sl)] = g
        return (ga,)

    return _record(out, (a,), rule)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = Tensor(np.stack([t.data for t in tensors], axis=axis))

    def rule(g):
        parts = np.moveaxis(g, axis, 0)
        return tuple(parts[i] for i in range(len(tensors)))

    return _record(out, tuple(tensors), rule)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def rule(g):
        grads = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _record(out, tuple(tensors), rule)
